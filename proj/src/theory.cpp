#include "fedate/theory.hpp"

#include <algorithm>
#include <cmath>

namespace fedate {

ScenarioFlags flags_from_config(const ScenarioConfig& cfg) {
  ScenarioFlags f;
  f.same_covariate_distribution = cfg.same_covariate_distribution();
  f.study_effects = cfg.has_study_effects();
  f.same_treatment_probabilities = cfg.same_treatment_probabilities();
  const double need = static_cast<double>(cfg.d) + 1.0;
  double treated = 0.0, control = 0.0;
  f.local_full_rank = true;
  for (const auto& s : cfg.studies) {
    const double n = static_cast<double>(s.n);
    const double smaller = std::max(static_cast<double>(cfg.min_arm_size), std::floor(n * std::min(s.p, 1.0 - s.p)));
    if (smaller < need) f.local_full_rank = false;
    treated += n * s.p;
    control += n * (1.0 - s.p);
  }
  f.federated_full_rank = treated >= need && control >= need;
  if (f.local_full_rank) f.federated_full_rank = true;
  return f;
}

namespace {

[[noreturn]] void invalid(const EstimatorId& id, const std::string& why) {
  throw Error(ErrorKind::FormulaInvalid, "no closed-form variance for " + estimator_name(id) + ": " + why);
}

}  // namespace

TheoreticalVariance asymptotic_variance(const EstimatorId& id, const ScenarioConfig& cfg) {
  cfg.validate();
  const TruthSummary truth = true_ate(cfg);
  const ScenarioFlags flags = flags_from_config(cfg);
  TheoreticalVariance out;
  out.id = id;
  if (cfg.arm1.quadratic || cfg.arm0.quadratic) invalid(id, "outcome model is not linear");
  out.assumptions.push_back("linear outcome model");

  const Vector dbeta = cfg.arm1.beta - cfg.arm0.beta;
  Matrix mixed = Matrix::Zero(cfg.d, cfg.d);
  for (std::size_t k = 0; k < cfg.K(); ++k) mixed += truth.rho(static_cast<Eigen::Index>(k)) * cfg.studies[k].sigma;
  const double spread = dbeta.dot(mixed * dbeta);
  const double sigma2 = cfg.sigma2;
  const double p = truth.p;
  const double pooled = sigma2 / (p * (1.0 - p)) + spread;

  auto local_term = [&](std::size_t k) {
    const auto& s = cfg.studies[k];
    return sigma2 / (s.p * (1.0 - s.p)) + dbeta.dot(s.sigma * dbeta);
  };

  switch (id.kind) {
    case EstimatorKind::Pool:
    case EstimatorKind::GD:
    case EstimatorKind::OneShotIVW:
      if (flags.study_effects) invalid(id, "biased under study effects");
      if (!flags.same_covariate_distribution && !flags.same_treatment_probabilities) {
        invalid(id, "covariate shift combined with unequal treatment probabilities");
      }
      out.assumptions.push_back("no study effects");
      out.assumptions.push_back("same covariate distribution or equal treatment probabilities");
      out.n_times_variance = pooled;
      return out;
    case EstimatorKind::OneShotSW:
      if (flags.study_effects) invalid(id, "biased under study effects");
      if (!flags.same_covariate_distribution) invalid(id, "variance inflated by covariate shift");
      out.assumptions.push_back("no study effects");
      out.assumptions.push_back("same covariate distribution");
      out.n_times_variance = pooled;
      return out;
    case EstimatorKind::PoolAdj:
    case EstimatorKind::GDAdj:
      if (!flags.same_treatment_probabilities) invalid(id, "derived for equal treatment probabilities");
      out.assumptions.push_back("equal treatment probabilities");
      out.n_times_variance = pooled;
      return out;
    case EstimatorKind::MetaSW: {
      double sum = 0.0;
      for (std::size_t k = 0; k < cfg.K(); ++k) {
        const auto& s = cfg.studies[k];
        sum += truth.rho(static_cast<Eigen::Index>(k)) / (s.p * (1.0 - s.p));
      }
      out.n_times_variance = sigma2 * sum + spread;
      return out;
    }
    case EstimatorKind::MetaIVW: {
      if (!flags.same_covariate_distribution) invalid(id, "inverse-variance weights are biased under covariate shift");
      out.assumptions.push_back("same covariate distribution");
      double sum = 0.0;
      for (std::size_t k = 0; k < cfg.K(); ++k) sum += truth.rho(static_cast<Eigen::Index>(k)) / local_term(k);
      out.n_times_variance = 1.0 / sum;
      return out;
    }
    case EstimatorKind::Local: {
      if (id.study < 1 || id.study > cfg.K()) invalid(id, "unknown study");
      // variance of tau_hat_k scaled by the total n
      out.n_times_variance = local_term(id.study - 1) / truth.rho(static_cast<Eigen::Index>(id.study - 1));
      return out;
    }
    case EstimatorKind::DM: {
      if (flags.study_effects || !flags.same_covariate_distribution || !flags.same_treatment_probabilities) {
        invalid(id, "derived for the homogeneous single-trial case");
      }
      const Matrix& sig = cfg.studies.front().sigma;
      out.assumptions.push_back("homogeneous studies");
      out.n_times_variance = (sigma2 + cfg.arm1.beta.dot(sig * cfg.arm1.beta)) / p +
                             (sigma2 + cfg.arm0.beta.dot(sig * cfg.arm0.beta)) / (1.0 - p);
      return out;
    }
    case EstimatorKind::OneShotSWAdj:
    case EstimatorKind::OneShotIVWAdj:
      invalid(id, "unshared intercepts have no closed form here");
  }
  invalid(id, "unhandled estimator");
}

BiasVerdict predict_bias(const EstimatorId& id, const ScenarioFlags& flags) {
  BiasVerdict v;
  switch (id.kind) {
    case EstimatorKind::DM:
      v.biased = recommend(flags).dm_biased;
      if (v.biased) v.reason = "scenario marked as biasing the difference in means";
      return v;
    case EstimatorKind::Pool:
    case EstimatorKind::GD:
    case EstimatorKind::OneShotSW:
    case EstimatorKind::OneShotIVW:
      if (flags.study_effects && !flags.same_treatment_probabilities) {
        v.biased = true;
        v.reason = "study membership confounds treatment when study effects meet unequal treatment probabilities";
      }
      return v;
    case EstimatorKind::MetaIVW:
      if (!flags.same_covariate_distribution) {
        v.biased = true;
        v.reason = "inverse-variance weights do not estimate the study proportions under covariate shift";
      }
      return v;
    case EstimatorKind::Local:
      if (!flags.same_covariate_distribution) {
        v.biased = true;
        v.reason = "a single study targets its own effect, which differs under covariate shift";
      }
      return v;
    case EstimatorKind::MetaSW:
    case EstimatorKind::PoolAdj:
    case EstimatorKind::GDAdj:
    case EstimatorKind::OneShotSWAdj:
    case EstimatorKind::OneShotIVWAdj:
      return v;
  }
  return v;
}

BiasVerdict predict_bias(const EstimatorId& id, const ScenarioConfig& cfg) {
  return predict_bias(id, flags_from_config(cfg));
}

Recommendation recommend(const ScenarioFlags& flags) {
  using K = EstimatorKind;
  Recommendation r;
  // local full rank implies federated full rank, so the local flag wins
  if (!flags.local_full_rank) {
    if (!flags.federated_full_rank) {
      r.advice = "Gather more data or add studies";
    } else if (flags.study_effects) {
      r.estimators = {{K::GDAdj, 0}};
      r.dm_biased = true;
      r.advice = "Use Adjusted GD";
    } else {
      r.estimators = {{K::GD, 0}};
      r.advice = "Use GD";
    }
    return r;
  }
  if (flags.same_covariate_distribution) {
    if (flags.study_effects) {
      r.estimators = {{K::GDAdj, 0}, {K::MetaIVW, 0}};
      r.dm_biased = true;
      r.advice = "Use Adjusted GD, or Meta-IVW";
    } else if (flags.same_treatment_probabilities) {
      r.estimators = {{K::OneShotIVW, 0}, {K::MetaIVW, 0}};
      r.advice = "Use 1S-IVW, or Meta-IVW";
    } else {
      r.estimators = {{K::OneShotIVW, 0}};
      r.advice = "Use 1S-IVW";
    }
    return r;
  }
  if (flags.study_effects) {
    r.estimators = {{K::GDAdj, 0}, {K::MetaSW, 0}};
    r.advice = "Use Adjusted GD, or Meta-SW";
  } else {
    r.estimators = {{K::OneShotIVW, 0}};
    r.advice = "Use 1S-IVW";
  }
  r.dm_biased = true;
  return r;
}

}  // namespace fedate
