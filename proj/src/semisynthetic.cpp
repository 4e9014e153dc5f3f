#include "fedate/semisynthetic.hpp"

#include <algorithm>
#include <cmath>

namespace fedate {

void StandInDesign::validate() const {
  if (sizes.empty() || sizes.size() != p.size()) {
    throw Error(ErrorKind::Dimension, "stand-in needs one treatment probability per site");
  }
  for (std::size_t k = 0; k < sizes.size(); ++k) {
    if (sizes[k] < 2 * static_cast<std::size_t>(kStandInCovariates + 2)) {
      throw Error(ErrorKind::Value, "stand-in site too small for both arms");
    }
    if (!(p[k] > 0.0 && p[k] < 1.0)) throw Error(ErrorKind::Value, "treatment probability outside (0,1)");
  }
  if (!(noise_sd >= 0.0) || !std::isfinite(mean_shift)) throw Error(ErrorKind::Value, "bad stand-in noise or shift");
}

FederatedDataset stand_in_dataset(const StandInDesign& design) {
  design.validate();
  static constexpr double kPrevalence[7] = {0.5, 0.45, 0.4, 0.35, 0.5, 0.45, 0.4};
  RngStream rng(design.seed, 0);
  FederatedDataset fed;
  fed.d = kStandInCovariates;
  for (std::size_t k = 0; k < design.K(); ++k) {
    const auto n = static_cast<Eigen::Index>(design.sizes[k]);
    const double kk = static_cast<double>(k);
    StudyDataset s;
    s.study_id = static_cast<int>(k) + 1;
    s.covariates.resize(n, kStandInCovariates);
    s.treatment = Eigen::VectorXi::Zero(n);
    s.outcome = Vector::Zero(n);
    double shift[4];
    double prevalence[7];
    for (int j = 0; j < 4; ++j) shift[j] = design.mean_shift * std::sin(1.7 * j + 2.3 * kk);
    for (int j = 0; j < 7; ++j) {
      prevalence[j] = std::clamp(kPrevalence[j] * std::exp(0.5 * std::sin(j + kk)), 0.3, 0.7);
    }
    for (Eigen::Index i = 0; i < n; ++i) {
      for (int j = 0; j < 4; ++j) s.covariates(i, j) = rng.normal();
      for (int j = 0; j < 4; ++j) s.covariates(i, 4 + j) = shift[j] + rng.normal();
      for (int j = 0; j < 7; ++j) s.covariates(i, 8 + j) = rng.bernoulli(prevalence[j]) ? 1.0 : 0.0;
    }
    fed.studies.push_back(std::move(s));
  }
  return regenerate_outcomes(fed, stand_in_outcomes(design, OutcomeMode::Linear), rng);
}

RegenerationSpec stand_in_outcomes(const StandInDesign& design, OutcomeMode mode) {
  design.validate();
  RegenerationSpec spec;
  spec.mode = mode;
  spec.noise_sd = design.noise_sd;
  spec.min_arm_size = static_cast<std::size_t>(kStandInCovariates) + 2;
  spec.p_by_study = Eigen::Map<const Vector>(design.p.data(), static_cast<Eigen::Index>(design.p.size()));

  Vector base = Vector::LinSpaced(kStandInCovariates, -0.5, 0.5);
  spec.arm0.intercept = 0.0;
  spec.arm0.coef = base;
  spec.arm1.intercept = 1.0;
  spec.arm1.coef = base;
  spec.arm1.coef.head(4) += Eigen::Vector4d(0.3, -0.2, 0.2, 0.1);
  spec.arm0.interaction = Eigen::Vector2d(0.5, 0.5);
  spec.arm1.interaction = spec.arm0.interaction;
  return spec;
}

}  // namespace fedate
