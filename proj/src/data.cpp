#include "fedate/data.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <optional>
#include <sstream>

namespace fedate {

std::size_t StudyDataset::n_arm(int arm) const {
  std::size_t count = 0;
  for (Eigen::Index i = 0; i < treatment.size(); ++i) count += treatment(i) == arm ? 1 : 0;
  return count;
}

void StudyDataset::validate() const {
  if (outcome.size() == 0) throw Error(ErrorKind::Value, "study has no rows");
  if (covariates.rows() != outcome.size() || treatment.size() != outcome.size()) {
    throw Error(ErrorKind::Dimension, "row counts disagree within study");
  }
  for (Eigen::Index i = 0; i < treatment.size(); ++i) {
    if (treatment(i) != 0 && treatment(i) != 1) {
      throw Error(ErrorKind::Value, "treatment must be 0 or 1");
    }
  }
  if (!covariates.allFinite() || !outcome.allFinite()) {
    throw Error(ErrorKind::Value, "non-finite value in study data");
  }
}

std::size_t FederatedDataset::n() const {
  std::size_t total = 0;
  for (const auto& s : studies) total += s.n();
  return total;
}

std::size_t FederatedDataset::n_arm(int arm) const {
  std::size_t total = 0;
  for (const auto& s : studies) total += s.n_arm(arm);
  return total;
}

void FederatedDataset::validate() const {
  if (studies.empty()) throw Error(ErrorKind::Value, "no studies");
  std::vector<int> ids;
  for (const auto& s : studies) {
    s.validate();
    if (s.d() != d) throw Error(ErrorKind::Dimension, "studies disagree on d");
    for (int id : ids) {
      if (id == s.study_id) throw Error(ErrorKind::Value, "duplicate study id");
    }
    ids.push_back(s.study_id);
  }
}

Matrix with_intercept(const Matrix& covariates) {
  Matrix out(covariates.rows(), covariates.cols() + 1);
  out.col(0).setOnes();
  out.rightCols(covariates.cols()) = covariates;
  return out;
}

ArmView split_by_arm(const StudyDataset& ds, int arm) {
  const std::size_t rows = ds.n_arm(arm);
  if (rows == 0) {
    std::ostringstream msg;
    msg << "study " << ds.study_id << " has no rows in arm " << arm;
    throw Error(ErrorKind::EmptyArm, msg.str());
  }
  ArmView view;
  view.design.resize(static_cast<Eigen::Index>(rows), ds.d() + 1);
  view.response.resize(static_cast<Eigen::Index>(rows));
  Eigen::Index r = 0;
  for (Eigen::Index i = 0; i < ds.treatment.size(); ++i) {
    if (ds.treatment(i) != arm) continue;
    view.design(r, 0) = 1.0;
    view.design.row(r).tail(ds.d()) = ds.covariates.row(i);
    view.response(r) = ds.outcome(i);
    ++r;
  }
  return view;
}

ArmView pooled_arm(const FederatedDataset& fed, int arm) {
  const std::size_t rows = fed.n_arm(arm);
  if (rows == 0) throw Error(ErrorKind::EmptyArm, "pooled data has an empty arm");
  ArmView view;
  view.design.resize(static_cast<Eigen::Index>(rows), fed.d + 1);
  view.response.resize(static_cast<Eigen::Index>(rows));
  Eigen::Index r = 0;
  for (const auto& s : fed.studies) {
    for (Eigen::Index i = 0; i < s.treatment.size(); ++i) {
      if (s.treatment(i) != arm) continue;
      view.design(r, 0) = 1.0;
      view.design.row(r).tail(fed.d) = s.covariates.row(i);
      view.response(r) = s.outcome(i);
      ++r;
    }
  }
  return view;
}

std::vector<ArmView> arm_views(const FederatedDataset& fed, int arm) {
  std::vector<ArmView> out;
  out.reserve(fed.K());
  for (const auto& s : fed.studies) out.push_back(split_by_arm(s, arm));
  return out;
}

FederatedDataset augment_dummies(const FederatedDataset& fed) {
  const Eigen::Index K = static_cast<Eigen::Index>(fed.K());
  if (K < 2) throw Error(ErrorKind::SingleStudy, "study dummies need at least two studies");
  FederatedDataset out;
  out.d = fed.d + K - 1;
  out.studies.reserve(fed.K());
  for (Eigen::Index k = 0; k < K; ++k) {
    const auto& s = fed.studies[static_cast<std::size_t>(k)];
    StudyDataset aug;
    aug.study_id = s.study_id;
    aug.treatment = s.treatment;
    aug.outcome = s.outcome;
    aug.covariates = Matrix::Zero(s.covariates.rows(), out.d);
    aug.covariates.leftCols(fed.d) = s.covariates;
    // position in study order, not the raw id, picks the indicator column
    if (k > 0) aug.covariates.col(fed.d + k - 1).setOnes();
    out.studies.push_back(std::move(aug));
  }
  return out;
}

RankConditions check_conditions(const FederatedDataset& fed, double rank_tolerance) {
  RankConditions out;
  out.local_full_rank = true;
  for (const auto& s : fed.studies) {
    for (int arm : {0, 1}) {
      if (s.n_arm(arm) == 0 || !is_full_column_rank(split_by_arm(s, arm).design, rank_tolerance)) {
        out.local_full_rank = false;
      }
    }
  }
  out.federated_full_rank = true;
  for (int arm : {0, 1}) {
    if (fed.n_arm(arm) == 0 || !is_full_column_rank(pooled_arm(fed, arm).design, rank_tolerance)) {
      out.federated_full_rank = false;
    }
  }
  return out;
}

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      out.push_back(trim(line.substr(start)));
      return out;
    }
    out.push_back(trim(line.substr(start, comma - start)));
    start = comma + 1;
  }
}

[[noreturn]] void fail_at(ErrorKind kind, std::size_t line, const std::string& what) {
  std::ostringstream msg;
  msg << "line " << line << ": " << what;
  throw Error(kind, msg.str());
}

double parse_number(std::string_view field, std::size_t line, const std::string& column) {
  double value = 0.0;
  const char* first = field.data();
  const char* last = field.data() + field.size();
  if (!field.empty() && *first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (field.empty() || ptr != last) {
    fail_at(ErrorKind::Parse, line, "cannot parse '" + std::string(field) + "' in column " + column);
  }
  if (ec == std::errc::result_out_of_range || !std::isfinite(value)) {
    fail_at(ErrorKind::Value, line, "non-finite value in column " + column);
  }
  if (ec != std::errc()) {
    fail_at(ErrorKind::Parse, line, "cannot parse '" + std::string(field) + "' in column " + column);
  }
  return value;
}

struct RawRow {
  int treatment;
  double outcome;
  std::vector<double> x;
};

}  // namespace

FederatedDataset parse_csv(std::istream& in, const CsvSchema& schema) {
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string_view> header;
  std::string header_text;
  while (std::getline(in, line)) {
    ++line_no;
    if (!trim(line).empty()) {
      header_text = line;
      header = split_fields(header_text);
      break;
    }
  }
  if (header.empty()) throw Error(ErrorKind::Schema, "empty file, no header row");

  std::optional<std::size_t> study_col, w_col, y_col;
  std::map<int, std::size_t> x_cols;
  for (std::size_t c = 0; c < header.size(); ++c) {
    const std::string_view name = header[c];
    if (name == schema.study_column) {
      study_col = c;
    } else if (name == schema.treatment_column) {
      w_col = c;
    } else if (name == schema.outcome_column) {
      y_col = c;
    } else if (name.size() > schema.covariate_prefix.size() &&
               name.substr(0, schema.covariate_prefix.size()) == schema.covariate_prefix) {
      int idx = 0;
      const auto digits = name.substr(schema.covariate_prefix.size());
      auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), idx);
      if (ec == std::errc() && ptr == digits.data() + digits.size() && idx >= 1) {
        if (x_cols.count(idx)) throw Error(ErrorKind::Schema, "duplicate column " + std::string(name));
        x_cols[idx] = c;
      }
    }
  }
  if (!study_col) throw Error(ErrorKind::Schema, "missing column " + schema.study_column);
  if (!w_col) throw Error(ErrorKind::Schema, "missing column " + schema.treatment_column);
  if (!y_col) throw Error(ErrorKind::Schema, "missing column " + schema.outcome_column);
  const int d = static_cast<int>(x_cols.size());
  for (int j = 1; j <= d; ++j) {
    if (!x_cols.count(j)) {
      throw Error(ErrorKind::Schema, "missing column " + schema.covariate_prefix + std::to_string(j));
    }
  }

  std::map<long long, std::vector<RawRow>> by_study;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto fields = split_fields(line);
    if (fields.size() != header.size()) {
      std::ostringstream what;
      what << "expected " << header.size() << " fields, found " << fields.size();
      fail_at(ErrorKind::Parse, line_no, what.str());
    }
    long long sid = 0;
    {
      const auto f = fields[*study_col];
      auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), sid);
      if (f.empty() || ec != std::errc() || ptr != f.data() + f.size()) {
        fail_at(ErrorKind::Parse, line_no, "study id '" + std::string(f) + "' is not an integer");
      }
    }
    RawRow row;
    const double w = parse_number(fields[*w_col], line_no, schema.treatment_column);
    if (w != 0.0 && w != 1.0) {
      fail_at(ErrorKind::Value, line_no, "treatment must be 0 or 1, found " + std::string(fields[*w_col]));
    }
    row.treatment = static_cast<int>(w);
    row.outcome = parse_number(fields[*y_col], line_no, schema.outcome_column);
    row.x.reserve(static_cast<std::size_t>(d));
    for (int j = 1; j <= d; ++j) {
      row.x.push_back(parse_number(fields[x_cols[j]], line_no, schema.covariate_prefix + std::to_string(j)));
    }
    by_study[sid].push_back(std::move(row));
  }
  if (by_study.empty()) throw Error(ErrorKind::Value, "no data rows");

  FederatedDataset fed;
  fed.d = d;
  int next_id = 1;
  for (const auto& [raw_id, rows] : by_study) {
    (void)raw_id;
    StudyDataset s;
    s.study_id = next_id++;
    const auto n = static_cast<Eigen::Index>(rows.size());
    s.covariates.resize(n, d);
    s.treatment.resize(n);
    s.outcome.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto& r = rows[static_cast<std::size_t>(i)];
      for (int j = 0; j < d; ++j) s.covariates(i, j) = r.x[static_cast<std::size_t>(j)];
      s.treatment(i) = r.treatment;
      s.outcome(i) = r.outcome;
    }
    fed.studies.push_back(std::move(s));
  }
  return fed;
}

FederatedDataset load_csv(const std::filesystem::path& path, const CsvSchema& schema) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  return parse_csv(in, schema);
}

void write_csv(const FederatedDataset& fed, std::ostream& out) {
  out << "study_id,w,y";
  for (Eigen::Index j = 1; j <= fed.d; ++j) out << ",x" << j;
  out << '\n';
  out << std::setprecision(17);
  for (const auto& s : fed.studies) {
    for (Eigen::Index i = 0; i < s.outcome.size(); ++i) {
      out << s.study_id << ',' << s.treatment(i) << ',' << s.outcome(i);
      for (Eigen::Index j = 0; j < fed.d; ++j) out << ',' << s.covariates(i, j);
      out << '\n';
    }
  }
}

void emit_csv(const FederatedDataset& fed, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
  write_csv(fed, out);
  if (!out) throw Error(ErrorKind::Io, "write failed for " + path.string());
}

}  // namespace fedate
