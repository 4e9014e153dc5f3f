#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "fedate/data.hpp"
#include "fedate/estimators.hpp"
#include "fedate/scenarios.hpp"

namespace fedate {

struct ExperimentPlan {
  ScenarioConfig scenario;  // Monte Carlo only
  std::vector<EstimatorId> estimators;
  std::size_t replications = 2000;
  std::uint64_t base_seed = 1;
  EstimateOptions options;  // FedAvg settings live in options.gd
  // Bootstrap: outcomes are regenerated on every resample when set. The truth
  // is true_tau when given, else the regenerated effect on the original rows.
  std::optional<RegenerationSpec> regenerate;
  std::optional<double> true_tau;
  bool parallel = true;

  void validate() const;
};

struct SummaryRow {
  EstimatorId id;
  std::size_t replications = 0;  // successful ones
  std::size_t failures = 0;
  double mean = 0.0;
  double variance = 0.0;  // divides by the replication count
  double squared_bias = 0.0;
  double rmse = 0.0;
  double mean_rounds = 0.0;
  double mean_floats = 0.0;  // up + down, per study

  bool operator==(const SummaryRow&) const = default;
};

// One estimator on one replication. tau_hat is NaN when it failed.
struct ReplicationRecord {
  double tau_hat = 0.0;
  std::size_t rounds = 0;
  double floats = 0.0;
  std::string error;
};

struct ExperimentResult {
  double true_tau = 0.0;
  std::vector<SummaryRow> rows;
  // records[r][e] for replication r and plan.estimators[e]
  std::vector<std::vector<ReplicationRecord>> records;
};

// Replication r draws everything from RngStream(base_seed, r), so the result
// does not depend on plan.parallel or the thread count.
ExperimentResult run_monte_carlo(const ExperimentPlan& plan);
ExperimentResult run_bootstrap(const FederatedDataset& fed, const ExperimentPlan& plan);

std::vector<SummaryRow> summarize(const std::vector<EstimatorId>& estimators,
                                  const std::vector<std::vector<ReplicationRecord>>& records,
                                  double true_tau);

enum class ReportFormat { Csv, Json };

ReportFormat format_from_path(const std::filesystem::path& path);
nlohmann::json rows_to_json(const std::vector<SummaryRow>& rows);
std::vector<SummaryRow> rows_from_json(const nlohmann::json& j);
void write_rows_csv(const std::vector<SummaryRow>& rows, std::ostream& out);
void emit_report(const std::vector<SummaryRow>& rows, ReportFormat format, const std::filesystem::path& path);

// replication,estimator,tau_hat,rounds,floats,error
void emit_replications(const ExperimentResult& result, const std::vector<EstimatorId>& estimators,
                       const std::filesystem::path& path);

}  // namespace fedate
