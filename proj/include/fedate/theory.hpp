#pragma once

#include <string>
#include <vector>

#include "fedate/estimators.hpp"
#include "fedate/scenarios.hpp"

namespace fedate {

struct ScenarioFlags {
  bool local_full_rank = true;
  bool federated_full_rank = true;
  bool same_covariate_distribution = true;
  bool study_effects = false;
  bool same_treatment_probabilities = true;

  // local full rank implies federated full rank
  bool valid() const { return !local_full_rank || federated_full_rank; }
};

// Rank flags come from the expected arm sizes (or the guaranteed minimum arm size).
ScenarioFlags flags_from_config(const ScenarioConfig& cfg);

struct TheoreticalVariance {
  EstimatorId id;
  double n_times_variance = 0.0;
  std::vector<std::string> assumptions;
};

// n * V_inf with rho_k = n_k / n, p = sum rho_k p_k, Sigma = sum rho_k Sigma_k.
// Throws FormulaInvalid outside the formula's regime.
TheoreticalVariance asymptotic_variance(const EstimatorId& id, const ScenarioConfig& cfg);

struct BiasVerdict {
  bool biased = false;
  std::string reason;
};

BiasVerdict predict_bias(const EstimatorId& id, const ScenarioFlags& flags);
BiasVerdict predict_bias(const EstimatorId& id, const ScenarioConfig& cfg);

struct Recommendation {
  std::vector<EstimatorId> estimators;  // empty only for the "gather more data" leaf
  bool dm_biased = false;
  std::string advice;  // leaf text
};

Recommendation recommend(const ScenarioFlags& flags);

}  // namespace fedate
