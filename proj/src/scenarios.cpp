#include "fedate/scenarios.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

namespace fedate {

using nlohmann::json;

double ArmParams::mean(const Eigen::Ref<const Eigen::RowVectorXd>& x) const {
  double value = c + x.dot(beta.transpose());
  if (quadratic) value += (x * (*quadratic)).dot(x);
  return value;
}

std::size_t ScenarioConfig::n() const {
  std::size_t total = 0;
  for (const auto& s : studies) total += s.n;
  return total;
}

bool ScenarioConfig::has_study_effects() const {
  for (const auto& s : studies) {
    if (s.h != studies.front().h) return true;
  }
  return false;
}

bool ScenarioConfig::same_covariate_distribution() const {
  for (const auto& s : studies) {
    if (s.mu != studies.front().mu || s.sigma != studies.front().sigma) return false;
  }
  return true;
}

bool ScenarioConfig::same_treatment_probabilities() const {
  for (const auto& s : studies) {
    if (s.p != studies.front().p) return false;
  }
  return true;
}

void ScenarioConfig::validate() const {
  if (studies.empty()) throw Error(ErrorKind::Value, "scenario has no studies");
  if (d < 1) throw Error(ErrorKind::Value, "scenario needs d >= 1");
  if (!(sigma2 >= 0.0) || !std::isfinite(sigma2)) throw Error(ErrorKind::Value, "sigma2 must be >= 0");
  for (const ArmParams* arm : {&arm1, &arm0}) {
    if (arm->beta.size() != d) throw Error(ErrorKind::Dimension, "beta length differs from d");
    if (!std::isfinite(arm->c) || !arm->beta.allFinite()) throw Error(ErrorKind::Value, "non-finite arm parameter");
    if (arm->quadratic && (arm->quadratic->rows() != d || arm->quadratic->cols() != d)) {
      throw Error(ErrorKind::Dimension, "quadratic term must be d x d");
    }
  }
  for (std::size_t k = 0; k < studies.size(); ++k) {
    const auto& s = studies[k];
    std::ostringstream where;
    where << "study " << (k + 1) << ": ";
    if (s.n < 1) throw Error(ErrorKind::Value, where.str() + "n must be >= 1");
    if (!(s.p > 0.0 && s.p < 1.0)) throw Error(ErrorKind::Value, where.str() + "p must lie in (0,1)");
    if (s.mu.size() != d) throw Error(ErrorKind::Dimension, where.str() + "mu length differs from d");
    if (s.sigma.rows() != d || s.sigma.cols() != d) {
      throw Error(ErrorKind::Dimension, where.str() + "sigma must be d x d");
    }
    if (!s.sigma.isApprox(s.sigma.transpose(), 1e-12)) {
      throw Error(ErrorKind::Value, where.str() + "sigma must be symmetric");
    }
    if (!std::isfinite(s.h)) throw Error(ErrorKind::Value, where.str() + "h must be finite");
    if (min_arm_size > 0 && 2 * min_arm_size > s.n) {
      throw Error(ErrorKind::Value, where.str() + "n too small for min_arm_size");
    }
    cholesky_lower(s.sigma);
  }
}

FederatedDataset generate(const ScenarioConfig& cfg, RngStream& rng) {
  cfg.validate();
  FederatedDataset fed;
  fed.d = cfg.d;
  const double sd = std::sqrt(cfg.sigma2);
  for (std::size_t k = 0; k < cfg.K(); ++k) {
    const auto& spec = cfg.studies[k];
    StudyDataset s;
    s.study_id = static_cast<int>(k) + 1;
    s.covariates = sample_mvn(spec.mu, spec.sigma, spec.n, rng);
    const auto n = static_cast<Eigen::Index>(spec.n);
    s.treatment.resize(n);
    for (int attempt = 0;; ++attempt) {
      std::size_t treated = 0;
      for (Eigen::Index i = 0; i < n; ++i) {
        s.treatment(i) = rng.bernoulli(spec.p) ? 1 : 0;
        treated += static_cast<std::size_t>(s.treatment(i));
      }
      if (treated >= cfg.min_arm_size && spec.n - treated >= cfg.min_arm_size) break;
      if (attempt == 10000) {
        throw Error(ErrorKind::DegenerateArm, "could not draw arms of the requested minimum size");
      }
    }
    s.outcome.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const ArmParams& arm = s.treatment(i) == 1 ? cfg.arm1 : cfg.arm0;
      s.outcome(i) = arm.mean(s.covariates.row(i)) + spec.h + sd * rng.normal();
    }
    fed.studies.push_back(std::move(s));
  }
  return fed;
}

TruthSummary true_ate(const ScenarioConfig& cfg) {
  cfg.validate();
  TruthSummary t;
  const auto K = static_cast<Eigen::Index>(cfg.K());
  t.tau_k.resize(K);
  t.rho.resize(K);
  const double n = static_cast<double>(cfg.n());
  const Vector dbeta = cfg.arm1.beta - cfg.arm0.beta;
  Matrix dq = Matrix::Zero(cfg.d, cfg.d);
  if (cfg.arm1.quadratic) dq += *cfg.arm1.quadratic;
  if (cfg.arm0.quadratic) dq -= *cfg.arm0.quadratic;
  for (Eigen::Index k = 0; k < K; ++k) {
    const auto& s = cfg.studies[static_cast<std::size_t>(k)];
    // E[x'Qx] = tr(Q Sigma) + mu'Q mu
    t.tau_k(k) = cfg.arm1.c - cfg.arm0.c + s.mu.dot(dbeta) + (dq.cwiseProduct(s.sigma)).sum() +
                 s.mu.dot(dq * s.mu);
    t.rho(k) = static_cast<double>(s.n) / n;
  }
  t.tau = t.rho.dot(t.tau_k);
  t.p = 0.0;
  for (Eigen::Index k = 0; k < K; ++k) t.p += t.rho(k) * cfg.studies[static_cast<std::size_t>(k)].p;
  return t;
}

Matrix equicorrelated(Eigen::Index d, double a, double b) {
  Matrix m = Matrix::Constant(d, d, b);
  m.diagonal().array() += a;
  return m;
}

namespace {

constexpr Eigen::Index kDefaultD = 10;

Vector split_vector(Eigen::Index d, double first, double second) {
  Vector v(d);
  for (Eigen::Index j = 0; j < d; ++j) v(j) = j < d / 2 ? first : second;
  return v;
}

ScenarioConfig default_config(std::size_t n_per_study) {
  ScenarioConfig cfg;
  cfg.d = kDefaultD;
  cfg.sigma2 = 1.0;
  cfg.arm1.c = -1.85;
  cfg.arm0.c = -2.0;
  cfg.arm1.beta.resize(kDefaultD);
  cfg.arm1.beta << -1.75, -1.5, -1.25, -1.0, -0.75, -0.5, -0.25, 0.0, 0.25, 0.5;
  cfg.arm0.beta.resize(kDefaultD);
  cfg.arm0.beta << -1.8, -1.6, -1.4, -1.2, -1.0, -0.8, -0.6, -0.4, -0.2, 0.0;
  cfg.min_arm_size = static_cast<std::size_t>(kDefaultD) + 2;
  for (int k = 0; k < 5; ++k) {
    StudySpec s;
    s.n = n_per_study;
    s.p = 0.5;
    s.mu = split_vector(kDefaultD, 1.0, -1.0);
    s.sigma = equicorrelated(kDefaultD, 0.5, 0.5);
    cfg.studies.push_back(s);
  }
  return cfg;
}

void apply_covariate_shift(ScenarioConfig& cfg) {
  const Eigen::Index d = cfg.d;
  cfg.studies[1].mu = split_vector(d, -1.0, 1.0);
  cfg.studies[1].sigma = equicorrelated(d, 10.5, 9.5);
  cfg.studies[2].mu = Vector::Zero(d);
  cfg.studies[2].sigma = equicorrelated(d, 0.71, 0.01);
  cfg.studies[3].mu = split_vector(d, 0.5, -1.0);
  cfg.studies[3].sigma = equicorrelated(d, 1.0, 0.35);
  cfg.studies[4].mu = split_vector(d, 1.2, 0.8);
  cfg.studies[4].sigma = equicorrelated(d, 1.25, 0.6);
}

void apply_study_effects(ScenarioConfig& cfg) {
  const double h[] = {1.0, 0.2, -1.0, 30.0, 2.0};
  for (std::size_t k = 0; k < 5; ++k) cfg.studies[k].h = h[k];
}

void apply_probabilities(ScenarioConfig& cfg, std::initializer_list<double> p) {
  std::size_t k = 0;
  for (double v : p) cfg.studies[k++].p = v;
}

const std::size_t kLarge = 100 * kDefaultD;
const std::size_t kSmall = 5 * kDefaultD;

}  // namespace

std::vector<std::string> preset_names() {
  return {"homog-large",       "homog-large-20d",  "homog-small",       "homog-small-6d",
          "unequal-p",         "imbalanced",       "imbalanced-small",  "covariate-shift",
          "covariate-shift-small", "study-effects", "study-effects-unequal-p",
          "study-effects-small", "full-hetero",    "full-hetero-small", "nonlinear"};
}

ScenarioConfig preset(std::string_view name) {
  ScenarioConfig cfg;
  if (name == "homog-large") {
    cfg = default_config(kLarge);
  } else if (name == "homog-large-20d") {
    cfg = default_config(20 * kDefaultD);
  } else if (name == "homog-small") {
    cfg = default_config(kSmall);
  } else if (name == "homog-small-6d") {
    cfg = default_config(6 * kDefaultD);
  } else if (name == "unequal-p") {
    cfg = default_config(kLarge);
    apply_probabilities(cfg, {0.9, 0.9, 0.9, 0.1, 0.1});
  } else if (name == "imbalanced" || name == "imbalanced-small") {
    const bool small = name == "imbalanced-small";
    cfg = default_config(small ? 3 * kDefaultD : 25 * kDefaultD);
    cfg.studies[0].n = small ? 13 * kDefaultD : 400 * kDefaultD;
  } else if (name == "covariate-shift" || name == "covariate-shift-small") {
    cfg = default_config(name == "covariate-shift" ? kLarge : kSmall);
    apply_covariate_shift(cfg);
  } else if (name == "study-effects" || name == "study-effects-small") {
    cfg = default_config(name == "study-effects" ? kLarge : kSmall);
    apply_study_effects(cfg);
  } else if (name == "study-effects-unequal-p") {
    cfg = default_config(kLarge);
    apply_study_effects(cfg);
    apply_probabilities(cfg, {0.75, 0.75, 0.75, 0.25, 0.25});
  } else if (name == "full-hetero" || name == "full-hetero-small") {
    // 6d keeps the p = 0.25 arms above d + 2 rows often enough to draw
    cfg = default_config(name == "full-hetero" ? kLarge : 6 * kDefaultD);
    apply_covariate_shift(cfg);
    apply_study_effects(cfg);
    apply_probabilities(cfg, {0.75, 0.75, 0.75, 0.25, 0.25});
  } else if (name == "nonlinear") {
    const Eigen::Index d = 4;
    cfg.d = d;
    cfg.sigma2 = 1.0;
    cfg.min_arm_size = static_cast<std::size_t>(d) + 2;
    cfg.arm1.c = 0.0;
    cfg.arm1.beta = Vector::Zero(d);
    Matrix q1 = Matrix::Zero(d, d);
    q1.diagonal() << 0.0, -0.5, 0.5, 1.5;
    q1(2, 3) = q1(3, 2) = 0.5;
    cfg.arm1.quadratic = q1;
    cfg.arm0.c = 0.0;
    cfg.arm0.beta = Vector::Zero(d);
    Matrix q0 = Matrix::Zero(d, d);
    q0.diagonal() << -0.35, 0.0, 0.5, 1.5;
    q0(0, 1) = q0(1, 0) = 0.5;
    cfg.arm0.quadratic = q0;
    for (int k = 0; k < 5; ++k) {
      StudySpec s;
      s.n = 200;
      s.p = 0.5;
      s.mu = split_vector(d, 1.0, -1.0);
      s.sigma = equicorrelated(d, 0.5, 0.5);
      cfg.studies.push_back(s);
    }
  } else {
    throw Error(ErrorKind::Value, "unknown scenario preset '" + std::string(name) + "'");
  }
  cfg.name = std::string(name);
  return cfg;
}

namespace {

Vector vector_from_json(const json& j, const char* what) {
  if (!j.is_array()) throw Error(ErrorKind::Schema, std::string(what) + " must be an array");
  Vector v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) throw Error(ErrorKind::Schema, std::string(what) + " must hold numbers");
    v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
  }
  return v;
}

Matrix matrix_from_json(const json& j, Eigen::Index d, const char* what) {
  if (!j.is_array() || j.size() != static_cast<std::size_t>(d)) {
    throw Error(ErrorKind::Schema, std::string(what) + " must be a d x d array");
  }
  Matrix m(d, d);
  for (Eigen::Index r = 0; r < d; ++r) {
    const Vector row = vector_from_json(j[static_cast<std::size_t>(r)], what);
    if (row.size() != d) throw Error(ErrorKind::Schema, std::string(what) + " must be a d x d array");
    m.row(r) = row.transpose();
  }
  return m;
}

json matrix_to_json(const Matrix& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(row);
  }
  return rows;
}

json vector_to_json(const Vector& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

const json& require(const json& j, const char* key) {
  if (!j.is_object() || !j.contains(key)) throw Error(ErrorKind::Schema, std::string("missing key '") + key + "'");
  return j.at(key);
}

double number(const json& j, const char* key) {
  const json& v = require(j, key);
  if (!v.is_number()) throw Error(ErrorKind::Schema, std::string("'") + key + "' must be a number");
  return v.get<double>();
}

ArmParams arm_from_json(const json& j, Eigen::Index d) {
  ArmParams arm;
  arm.c = number(j, "c");
  arm.beta = vector_from_json(require(j, "beta"), "beta");
  if (arm.beta.size() != d) throw Error(ErrorKind::Schema, "beta length differs from d");
  if (j.contains("quadratic")) arm.quadratic = matrix_from_json(j.at("quadratic"), d, "quadratic");
  return arm;
}

json arm_to_json(const ArmParams& arm) {
  json j = {{"c", arm.c}, {"beta", vector_to_json(arm.beta)}};
  if (arm.quadratic) j["quadratic"] = matrix_to_json(*arm.quadratic);
  return j;
}

}  // namespace

ScenarioConfig scenario_from_json(const json& j) {
  try {
    ScenarioConfig cfg;
    if (j.contains("name") && j.at("name").is_string()) cfg.name = j.at("name").get<std::string>();
    const json& dj = require(j, "d");
    if (!dj.is_number_integer() || dj.get<long long>() < 1) throw Error(ErrorKind::Schema, "'d' must be a positive integer");
    cfg.d = dj.get<Eigen::Index>();
    cfg.sigma2 = number(j, "sigma2");
    cfg.arm1 = arm_from_json(require(j, "arm1"), cfg.d);
    cfg.arm0 = arm_from_json(require(j, "arm0"), cfg.d);
    if (j.contains("min_arm_size")) cfg.min_arm_size = j.at("min_arm_size").get<std::size_t>();
    const json& studies = require(j, "studies");
    if (!studies.is_array() || studies.empty()) throw Error(ErrorKind::Schema, "'studies' must be a non-empty array");
    for (const json& sj : studies) {
      StudySpec s;
      const json& nj = require(sj, "n");
      if (!nj.is_number_integer() || nj.get<long long>() < 1) throw Error(ErrorKind::Schema, "'n' must be a positive integer");
      s.n = nj.get<std::size_t>();
      s.p = number(sj, "p");
      s.mu = vector_from_json(require(sj, "mu"), "mu");
      if (s.mu.size() != cfg.d) throw Error(ErrorKind::Schema, "mu length differs from d");
      const json& sig = require(sj, "sigma");
      if (sig.is_array()) {
        s.sigma = matrix_from_json(sig, cfg.d, "sigma");
      } else {
        const json& kind = require(sig, "kind");
        if (kind == "a*I+b*J") {
          s.sigma = equicorrelated(cfg.d, number(sig, "a"), number(sig, "b"));
        } else if (kind == "dense") {
          s.sigma = matrix_from_json(require(sig, "matrix"), cfg.d, "sigma.matrix");
        } else {
          throw Error(ErrorKind::Schema, "sigma.kind must be \"a*I+b*J\" or \"dense\"");
        }
      }
      s.h = sj.contains("h") ? number(sj, "h") : 0.0;
      cfg.studies.push_back(std::move(s));
    }
    if (j.contains("K") && j.at("K").get<std::size_t>() != cfg.studies.size()) {
      throw Error(ErrorKind::Schema, "'K' disagrees with the number of studies");
    }
    cfg.validate();
    return cfg;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Schema, e.what());
  }
}

json scenario_to_json(const ScenarioConfig& cfg) {
  json j;
  if (!cfg.name.empty()) j["name"] = cfg.name;
  j["K"] = cfg.K();
  j["d"] = cfg.d;
  j["sigma2"] = cfg.sigma2;
  j["min_arm_size"] = cfg.min_arm_size;
  j["arm1"] = arm_to_json(cfg.arm1);
  j["arm0"] = arm_to_json(cfg.arm0);
  json studies = json::array();
  for (const auto& s : cfg.studies) {
    json sj = {{"n", s.n}, {"p", s.p}, {"mu", vector_to_json(s.mu)}, {"h", s.h}};
    const double b = s.sigma(0, s.sigma.cols() > 1 ? 1 : 0) * (s.sigma.cols() > 1 ? 1.0 : 0.0);
    const double a = s.sigma(0, 0) - b;
    if (s.sigma == equicorrelated(cfg.d, a, b)) {
      sj["sigma"] = {{"kind", "a*I+b*J"}, {"a", a}, {"b", b}};
    } else {
      sj["sigma"] = {{"kind", "dense"}, {"matrix", matrix_to_json(s.sigma)}};
    }
    studies.push_back(sj);
  }
  j["studies"] = studies;
  return j;
}

ScenarioConfig load_scenario(const std::string& preset_or_path) {
  for (const auto& name : preset_names()) {
    if (name == preset_or_path) return preset(name);
  }
  std::ifstream in(preset_or_path);
  if (!in) throw Error(ErrorKind::Io, "'" + preset_or_path + "' is neither a preset nor a readable file");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Parse, preset_or_path + ": " + e.what());
  }
  return scenario_from_json(j);
}

double OutcomeModel::mean(OutcomeMode mode, const Eigen::Ref<const Eigen::RowVectorXd>& x) const {
  if (mode == OutcomeMode::Linear) return intercept + x.dot(coef.transpose());
  double value = intercept;
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    const double term = j < 3 ? std::pow(x(j), static_cast<double>(j + 1)) : x(j);
    value += term * coef(j);
  }
  value += interaction(0) * (-x(1) * x(2)) + interaction(1) * (x(0) * x(3));
  return value;
}

namespace {

void check_spec(const FederatedDataset& fed, const RegenerationSpec& spec) {
  if (spec.arm1.coef.size() != fed.d || spec.arm0.coef.size() != fed.d) {
    throw Error(ErrorKind::Dimension, "outcome coefficients must have length d");
  }
  if (spec.mode == OutcomeMode::Polynomial && fed.d < 4) {
    throw Error(ErrorKind::Dimension, "polynomial outcomes need d >= 4");
  }
  if (spec.p_by_study.size() != static_cast<Eigen::Index>(fed.K())) {
    throw Error(ErrorKind::Dimension, "one treatment probability per study required");
  }
  for (Eigen::Index k = 0; k < spec.p_by_study.size(); ++k) {
    if (!(spec.p_by_study(k) > 0.0 && spec.p_by_study(k) < 1.0)) {
      throw Error(ErrorKind::Value, "treatment probabilities must lie in (0,1)");
    }
  }
  if (!(spec.noise_sd >= 0.0)) throw Error(ErrorKind::Value, "noise_sd must be >= 0");
}

bool arms_usable(const StudyDataset& s, std::size_t min_arm_size) {
  for (int arm : {0, 1}) {
    const std::size_t rows = s.n_arm(arm);
    if (rows == 0 || rows < min_arm_size) return false;
  }
  if (min_arm_size == 0) return true;
  for (int arm : {0, 1}) {
    if (!is_full_column_rank(split_by_arm(s, arm).design)) return false;
  }
  return true;
}

}  // namespace

FederatedDataset regenerate_outcomes(const FederatedDataset& fed, const RegenerationSpec& spec,
                                     RngStream& rng) {
  check_spec(fed, spec);
  FederatedDataset out = fed;
  for (std::size_t k = 0; k < out.K(); ++k) {
    auto& s = out.studies[k];
    const double p = spec.p_by_study(static_cast<Eigen::Index>(k));
    for (int attempt = 0;; ++attempt) {
      for (Eigen::Index i = 0; i < s.treatment.size(); ++i) s.treatment(i) = rng.bernoulli(p) ? 1 : 0;
      if (spec.min_arm_size == 0 || arms_usable(s, spec.min_arm_size)) break;
      if (attempt == 10000) {
        throw Error(ErrorKind::RankDeficient, "could not draw usable arms for study " + std::to_string(s.study_id));
      }
    }
    for (Eigen::Index i = 0; i < s.outcome.size(); ++i) {
      const OutcomeModel& m = s.treatment(i) == 1 ? spec.arm1 : spec.arm0;
      s.outcome(i) = m.mean(spec.mode, s.covariates.row(i)) + spec.noise_sd * rng.normal();
    }
  }
  return out;
}

double regenerated_ate(const FederatedDataset& fed, const RegenerationSpec& spec) {
  check_spec(fed, spec);
  double total = 0.0;
  for (const auto& s : fed.studies) {
    for (Eigen::Index i = 0; i < s.covariates.rows(); ++i) {
      total += spec.arm1.mean(spec.mode, s.covariates.row(i)) - spec.arm0.mean(spec.mode, s.covariates.row(i));
    }
  }
  return total / static_cast<double>(fed.n());
}

FederatedDataset bootstrap_resample(const FederatedDataset& fed, RngStream& rng) {
  FederatedDataset out;
  out.d = fed.d;
  out.studies.reserve(fed.K());
  for (const auto& s : fed.studies) {
    StudyDataset r;
    r.study_id = s.study_id;
    const Eigen::Index n = s.outcome.size();
    r.covariates.resize(n, s.covariates.cols());
    r.treatment.resize(n);
    r.outcome.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto src = static_cast<Eigen::Index>(rng.index(static_cast<std::size_t>(n)));
      r.covariates.row(i) = s.covariates.row(src);
      r.treatment(i) = s.treatment(src);
      r.outcome(i) = s.outcome(src);
    }
    out.studies.push_back(std::move(r));
  }
  return out;
}

}  // namespace fedate
