#pragma once

#include <cstddef>

#include "fedate/data.hpp"
#include "fedate/estimators.hpp"

namespace fedate {

// Runs the estimator's message exchange with a detailed ledger. The estimate is
// the one the estimator module returns for the same inputs.
EstimateReport run_protocol(const FederatedDataset& fed, const EstimatorId& id,
                            const EstimateOptions& options = {});

// Closed-form communication for one study. `width` is the arm-model width:
// d + 1, or d + K for the dummy-augmented GD. `fedavg_rounds` is the number of
// FedAvg update rounds actually run; `auto_eta` adds the eigenvalue setup round.
struct ExpectedComm {
  std::size_t rounds = 0;
  std::size_t floats_up = 0;
  std::size_t floats_down = 0;
};

ExpectedComm expected_comm(EstimatorKind kind, std::size_t d, std::size_t K,
                           std::size_t fedavg_rounds = 0, bool auto_eta = false);

// True when every logged message kind is an aggregate. Raw rows have no message
// kind, so this only fails on a ledger built by hand.
bool ledger_carries_only_aggregates(const CommLedger& ledger);

}  // namespace fedate
