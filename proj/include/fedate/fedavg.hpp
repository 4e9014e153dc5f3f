#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include "fedate/data.hpp"
#include "fedate/ledger.hpp"
#include "fedate/numerics.hpp"

namespace fedate {

struct FedAvgConfig {
  std::size_t T = 4000;  // rounds
  std::size_t E = 1;     // local steps per round
  std::size_t B = 0;     // batch size; 0 means full batch
  // Global step size. Unset means auto: one extra round gathers the local
  // eigenvalues and the server applies (2 / sum_k lambda_max,k) / 10.
  std::optional<double> eta;
  // Per-study step sizes; overrides eta when set.
  std::optional<Vector> local_eta;
  // Stop once ||theta_{t+1} - theta_t||_2 <= tol. 0 runs all T rounds.
  double convergence_tol = 1e-10;
  std::optional<Vector> theta0;
  std::uint64_t seed = 0;  // mini-batch sampling
  std::uint64_t stream = 0;
  bool keep_log = true;

  void validate() const;
};

struct FedAvgResult {
  Vector theta;
  CommLedger ledger;
  std::size_t rounds_run = 0;  // model-update rounds, excluding the eigenvalue setup round
  bool converged = false;
  double last_step = 0.0;
  double eta = 0.0;
};

inline constexpr double kDivergenceGuard = 1e12;

// Algorithm: each round the server broadcasts theta, every study takes E gradient
// steps of -(2/B) X_b'(y_b - X_b theta) on its own rows, and the server averages
// the returned models with weights n_k / n. `arm` only labels ledger entries.
FedAvgResult run_fedavg(const std::vector<ArmView>& studies, const FedAvgConfig& cfg, int arm = -1);

// Largest eigenvalue of X'X / n for one study's design.
double local_max_eigenvalue(const ArmView& view);

enum class LearningRateMode { GlobalE1, LocalT1 };

struct LearningRate {
  LearningRateMode mode = LearningRateMode::GlobalE1;
  double global = 0.0;  // GlobalE1: (2 / sum_k lambda_k) / 10
  Vector local;         // LocalT1: 2 / lambda_k per study
};

LearningRate select_learning_rate(const std::vector<ArmView>& studies, LearningRateMode mode);
LearningRate select_learning_rate(const std::vector<double>& lambda_max, LearningRateMode mode);

// Full-batch least-squares loss sum_k (n_k/n) (1/n_k) ||y_k - X_k theta||^2.
double fedavg_loss(const std::vector<ArmView>& studies, const Vector& theta);

}  // namespace fedate
