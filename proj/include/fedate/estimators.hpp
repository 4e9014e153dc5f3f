#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "fedate/data.hpp"
#include "fedate/fedavg.hpp"
#include "fedate/ledger.hpp"
#include "fedate/numerics.hpp"

namespace fedate {

enum class EstimatorKind {
  DM,
  Local,
  Pool,
  MetaSW,
  MetaIVW,
  OneShotSW,
  OneShotIVW,
  GD,
  PoolAdj,
  GDAdj,
  OneShotSWAdj,
  OneShotIVWAdj,
};

struct EstimatorId {
  EstimatorKind kind = EstimatorKind::Pool;
  std::size_t study = 0;  // 1-based, Local only

  bool operator==(const EstimatorId& other) const {
    return kind == other.kind && study == other.study;
  }
};

// dm, local:K, pool, pool-adj, meta-sw, meta-ivw, 1s-sw, 1s-ivw, 1s-sw-adj,
// 1s-ivw-adj, gd, gd-adj
std::string estimator_name(const EstimatorId& id);
EstimatorId parse_estimator(std::string_view name);
// Every estimator except the per-study Local ones.
std::vector<EstimatorId> all_estimators();
bool is_adjusted(EstimatorKind kind);

struct ArmFit {
  Vector theta_hat;
  Matrix gram;
  std::size_t n_arm = 0;
  double rss = 0.0;
  // rss / (n_arm - cols); 0 for an exact fit or when n_arm <= cols
  double residual_variance = 0.0;
};

struct ArmFits {
  ArmFit treated;
  ArmFit control;
};

ArmFit fit_arm(const ArmView& view, double rank_tolerance = kDefaultRankTolerance);
ArmFits fit_arm_models(const ArmView& treated, const ArmView& control,
                       double rank_tolerance = kDefaultRankTolerance);

// Mean over eval_design rows of x'(theta1 - theta0).
double g_formula(const Vector& theta1, const Vector& theta0, const Matrix& eval_design);

struct EstimateReport {
  EstimatorId id;
  double tau_hat = 0.0;
  std::optional<double> plugin_variance;
  CommLedger comm;
};

EstimateReport dm(const StudyDataset& ds);
EstimateReport dm(const FederatedDataset& fed);

// Fits both arms of the study and evaluates the G-formula on all its rows. The
// plug-in variance is attached when both arms have at least d + 2 rows.
EstimateReport local_tau(const StudyDataset& ds, double rank_tolerance = kDefaultRankTolerance);

EstimateReport pool_tau(const FederatedDataset& fed, bool adjusted,
                        double rank_tolerance = kDefaultRankTolerance);

double meta_sw(const std::vector<double>& tau, const std::vector<double>& sizes);
double meta_ivw(const std::vector<double>& tau, const std::vector<double>& variances);

// sigma2/(n p(1-p)) + ||dbeta||^2_Sigma / n with a residual variance pooled over
// both arms (denominator n - d - 1) and the sample covariance (denominator n - 1).
double plugin_local_variance(const ArmFits& fits, const StudyDataset& ds);

enum class Aggregation { SW, IVW };

EstimateReport meta_tau(const FederatedDataset& fed, Aggregation mode,
                        double rank_tolerance = kDefaultRankTolerance);

// SW: sum (n_k/n) theta_k. IVW: (sum G_k)^-1 sum G_k theta_k.
Vector one_shot_theta(const std::vector<ArmFit>& fits, Aggregation mode,
                      double rank_tolerance = kDefaultRankTolerance);

// Centered Gram X'(I - 11'/n)X of an arm's covariates (intercept column dropped).
Matrix centered_gram(const ArmView& view);

// Same aggregation for slope vectors only, with weights n_k or the centered Grams.
Vector one_shot_beta(const std::vector<Vector>& betas, const std::vector<std::size_t>& sizes,
                     const std::vector<Matrix>& centered, Aggregation mode,
                     double rank_tolerance = kDefaultRankTolerance);

EstimateReport one_shot_tau(const FederatedDataset& fed, Aggregation mode, bool adjusted,
                            double rank_tolerance = kDefaultRankTolerance);

struct GdOptions {
  FedAvgConfig fedavg;
  // NoConvergence when FedAvg stops on the round cap instead of the step tolerance.
  bool require_convergence = true;
};

EstimateReport gd_tau(const FederatedDataset& fed, const GdOptions& options, bool adjusted,
                      double rank_tolerance = kDefaultRankTolerance);

struct EstimateOptions {
  double rank_tolerance = kDefaultRankTolerance;
  GdOptions gd;
};

EstimateReport estimate(const FederatedDataset& fed, const EstimatorId& id,
                        const EstimateOptions& options = {});

}  // namespace fedate
