#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "fedate/data.hpp"
#include "fedate/numerics.hpp"

namespace fedate {

// Outcome mean for one arm: c + x'beta (+ x'Qx when quadratic is set).
struct ArmParams {
  double c = 0.0;
  Vector beta;
  std::optional<Matrix> quadratic;

  double mean(const Eigen::Ref<const Eigen::RowVectorXd>& x) const;
};

struct StudySpec {
  std::size_t n = 0;
  double p = 0.5;
  Vector mu;
  Matrix sigma;
  double h = 0.0;
};

struct ScenarioConfig {
  std::string name;
  Eigen::Index d = 0;
  double sigma2 = 1.0;
  ArmParams arm1;
  ArmParams arm0;
  std::vector<StudySpec> studies;
  // Treatment is redrawn for a study until both arms hold at least this many rows.
  std::size_t min_arm_size = 0;

  std::size_t K() const { return studies.size(); }
  std::size_t n() const;
  bool has_study_effects() const;
  bool same_covariate_distribution() const;
  bool same_treatment_probabilities() const;
  void validate() const;
};

struct TruthSummary {
  double tau = 0.0;
  Vector tau_k;
  Vector rho;
  double p = 0.0;
};

FederatedDataset generate(const ScenarioConfig& cfg, RngStream& rng);

// Study effects cancel, so h never enters.
TruthSummary true_ate(const ScenarioConfig& cfg);

// a*I + b*J of size d.
Matrix equicorrelated(Eigen::Index d, double a, double b);

std::vector<std::string> preset_names();
ScenarioConfig preset(std::string_view name);

ScenarioConfig scenario_from_json(const nlohmann::json& j);
nlohmann::json scenario_to_json(const ScenarioConfig& cfg);
// A preset name, or a path to a JSON file.
ScenarioConfig load_scenario(const std::string& preset_or_path);

enum class OutcomeMode { Linear, Polynomial };

// Linear: intercept + x'coef. Polynomial: x1..x3 enter as x1, x2^2, x3^3 and the
// interaction pair (-x2*x3, x1*x4) is weighted by `interaction`.
struct OutcomeModel {
  double intercept = 0.0;
  Vector coef;
  Eigen::Vector2d interaction = Eigen::Vector2d::Zero();

  double mean(OutcomeMode mode, const Eigen::Ref<const Eigen::RowVectorXd>& x) const;
};

struct RegenerationSpec {
  OutcomeMode mode = OutcomeMode::Linear;
  OutcomeModel arm1;
  OutcomeModel arm0;
  Vector p_by_study;
  double noise_sd = 1.0;
  // Treatment is redrawn until both arms have this many rows and a full-rank design.
  std::size_t min_arm_size = 0;
};

// Covariates are copied untouched; treatment and outcomes are redrawn.
FederatedDataset regenerate_outcomes(const FederatedDataset& fed, const RegenerationSpec& spec,
                                     RngStream& rng);

// Mean of mu1(x) - mu0(x) over every row of fed.
double regenerated_ate(const FederatedDataset& fed, const RegenerationSpec& spec);

// Resamples rows with replacement within each study; study sizes are kept.
FederatedDataset bootstrap_resample(const FederatedDataset& fed, RngStream& rng);

}  // namespace fedate
