#include "fedate/harness.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>


namespace fedate {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::vector<ReplicationRecord> failed_all(std::size_t count, const std::string& why) {
  return std::vector<ReplicationRecord>(count, ReplicationRecord{kNaN, 0, 0.0, why});
}

std::vector<ReplicationRecord> run_estimators(const FederatedDataset& fed, const ExperimentPlan& plan,
                                              std::uint64_t rep) {
  std::vector<ReplicationRecord> out;
  out.reserve(plan.estimators.size());
  EstimateOptions options = plan.options;
  options.gd.fedavg.keep_log = false;
  options.gd.fedavg.seed = plan.base_seed;
  options.gd.fedavg.stream = rep;
  for (const auto& id : plan.estimators) {
    ReplicationRecord rec;
    try {
      const EstimateReport report = estimate(fed, id, options);
      rec.tau_hat = report.tau_hat;
      rec.rounds = report.comm.rounds();
      if (report.comm.studies() > 0) {
        rec.floats = static_cast<double>(report.comm.total_floats()) / static_cast<double>(report.comm.studies());
      }
    } catch (const Error& e) {
      rec.tau_hat = kNaN;
      rec.error = e.what();
    }
    out.push_back(std::move(rec));
  }
  return out;
}

template <class OneRep>
std::vector<std::vector<ReplicationRecord>> replicate(const ExperimentPlan& plan, OneRep&& one) {
  const auto reps = static_cast<std::int64_t>(plan.replications);
  std::vector<std::vector<ReplicationRecord>> records(plan.replications);
  auto body = [&](std::int64_t r) {
    try {
      records[static_cast<std::size_t>(r)] = one(static_cast<std::uint64_t>(r));
    } catch (const Error& e) {
      records[static_cast<std::size_t>(r)] = failed_all(plan.estimators.size(), e.what());
    }
  };
  if (plan.parallel) {
#pragma omp parallel for schedule(dynamic)
    for (std::int64_t r = 0; r < reps; ++r) body(r);
  } else {
    for (std::int64_t r = 0; r < reps; ++r) body(r);
  }
  return records;
}

std::string number(double v) {
  if (std::isnan(v)) return "nan";
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace

void ExperimentPlan::validate() const {
  if (replications < 1) throw Error(ErrorKind::Value, "replications must be at least 1");
  if (estimators.empty()) throw Error(ErrorKind::Value, "no estimators requested");
  options.gd.fedavg.validate();
}

std::vector<SummaryRow> summarize(const std::vector<EstimatorId>& estimators,
                                  const std::vector<std::vector<ReplicationRecord>>& records,
                                  double true_tau) {
  std::vector<SummaryRow> rows;
  for (std::size_t e = 0; e < estimators.size(); ++e) {
    SummaryRow row;
    row.id = estimators[e];
    double sum = 0.0, rounds = 0.0, floats = 0.0;
    for (const auto& rep : records) {
      const auto& rec = rep.at(e);
      if (std::isnan(rec.tau_hat)) {
        ++row.failures;
        continue;
      }
      ++row.replications;
      sum += rec.tau_hat;
      rounds += static_cast<double>(rec.rounds);
      floats += rec.floats;
    }
    if (row.replications == 0) {
      row.mean = row.variance = row.squared_bias = row.rmse = kNaN;
      row.mean_rounds = row.mean_floats = kNaN;
      rows.push_back(row);
      continue;
    }
    const double n = static_cast<double>(row.replications);
    row.mean = sum / n;
    double ss = 0.0;
    for (const auto& rep : records) {
      const double t = rep[e].tau_hat;
      if (!std::isnan(t)) ss += (t - row.mean) * (t - row.mean);
    }
    row.variance = ss / n;
    row.squared_bias = (row.mean - true_tau) * (row.mean - true_tau);
    row.rmse = std::sqrt(row.squared_bias + row.variance);
    row.mean_rounds = rounds / n;
    row.mean_floats = floats / n;
    rows.push_back(row);
  }
  return rows;
}

ExperimentResult run_monte_carlo(const ExperimentPlan& plan) {
  plan.validate();
  plan.scenario.validate();
  ExperimentResult result;
  result.true_tau = true_ate(plan.scenario).tau;
  result.records = replicate(plan, [&](std::uint64_t r) {
    RngStream rng(plan.base_seed, r);
    const FederatedDataset fed = generate(plan.scenario, rng);
    return run_estimators(fed, plan, r);
  });
  result.rows = summarize(plan.estimators, result.records, result.true_tau);
  return result;
}

ExperimentResult run_bootstrap(const FederatedDataset& fed, const ExperimentPlan& plan) {
  plan.validate();
  fed.validate();
  ExperimentResult result;
  if (plan.true_tau) {
    result.true_tau = *plan.true_tau;
  } else if (plan.regenerate) {
    result.true_tau = regenerated_ate(fed, *plan.regenerate);
  } else {
    throw Error(ErrorKind::Value, "bootstrap needs a true effect or an outcome model");
  }
  result.records = replicate(plan, [&](std::uint64_t r) {
    RngStream rng(plan.base_seed, r);
    FederatedDataset sample = bootstrap_resample(fed, rng);
    if (plan.regenerate) sample = regenerate_outcomes(sample, *plan.regenerate, rng);
    return run_estimators(sample, plan, r);
  });
  result.rows = summarize(plan.estimators, result.records, result.true_tau);
  return result;
}

ReportFormat format_from_path(const std::filesystem::path& path) {
  const auto ext = path.extension().string();
  if (ext == ".csv") return ReportFormat::Csv;
  if (ext == ".json") return ReportFormat::Json;
  throw Error(ErrorKind::Value, "report path must end in .csv or .json: " + path.string());
}

nlohmann::json rows_to_json(const std::vector<SummaryRow>& rows) {
  auto num = [](double v) { return std::isnan(v) ? nlohmann::json(nullptr) : nlohmann::json(v); };
  nlohmann::json out = nlohmann::json::array();
  for (const auto& r : rows) {
    out.push_back({{"estimator", estimator_name(r.id)},
                   {"replications", r.replications},
                   {"failures", r.failures},
                   {"mean", num(r.mean)},
                   {"variance", num(r.variance)},
                   {"squared_bias", num(r.squared_bias)},
                   {"rmse", num(r.rmse)},
                   {"mean_rounds", num(r.mean_rounds)},
                   {"mean_floats", num(r.mean_floats)}});
  }
  return out;
}

std::vector<SummaryRow> rows_from_json(const nlohmann::json& j) {
  auto num = [](const nlohmann::json& v) { return v.is_null() ? kNaN : v.get<double>(); };
  std::vector<SummaryRow> rows;
  try {
    for (const auto& o : j) {
      SummaryRow r;
      r.id = parse_estimator(o.at("estimator").get<std::string>());
      r.replications = o.at("replications").get<std::size_t>();
      r.failures = o.at("failures").get<std::size_t>();
      r.mean = num(o.at("mean"));
      r.variance = num(o.at("variance"));
      r.squared_bias = num(o.at("squared_bias"));
      r.rmse = num(o.at("rmse"));
      r.mean_rounds = num(o.at("mean_rounds"));
      r.mean_floats = num(o.at("mean_floats"));
      rows.push_back(r);
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Schema, std::string("bad report: ") + e.what());
  }
  return rows;
}

void write_rows_csv(const std::vector<SummaryRow>& rows, std::ostream& out) {
  out << "estimator,replications,failures,mean,variance,squared_bias,rmse,mean_rounds,mean_floats\n";
  for (const auto& r : rows) {
    out << estimator_name(r.id) << ',' << r.replications << ',' << r.failures << ',' << number(r.mean) << ','
        << number(r.variance) << ',' << number(r.squared_bias) << ',' << number(r.rmse) << ','
        << number(r.mean_rounds) << ',' << number(r.mean_floats) << '\n';
  }
}

void emit_report(const std::vector<SummaryRow>& rows, ReportFormat format, const std::filesystem::path& path) {
  if (rows.empty()) throw Error(ErrorKind::Value, "no rows to report");
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::Io, "cannot open " + path.string());
  if (format == ReportFormat::Csv) {
    write_rows_csv(rows, out);
  } else {
    out << rows_to_json(rows).dump(2) << '\n';
  }
  if (!out) throw Error(ErrorKind::Io, "write failed for " + path.string());
}

void emit_replications(const ExperimentResult& result, const std::vector<EstimatorId>& estimators,
                       const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::Io, "cannot open " + path.string());
  out << "replication,estimator,tau_hat,rounds,floats,error\n";
  for (std::size_t r = 0; r < result.records.size(); ++r) {
    for (std::size_t e = 0; e < estimators.size(); ++e) {
      const auto& rec = result.records[r][e];
      std::string err = rec.error;
      for (char& c : err) {
        if (c == ',' || c == '\n') c = ';';
      }
      out << r << ',' << estimator_name(estimators[e]) << ',' << number(rec.tau_hat) << ',' << rec.rounds << ','
          << number(rec.floats) << ',' << err << '\n';
    }
  }
  if (!out) throw Error(ErrorKind::Io, "write failed for " + path.string());
}

}  // namespace fedate
