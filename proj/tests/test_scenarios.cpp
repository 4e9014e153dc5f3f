#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <map>

#include "fedate/scenarios.hpp"
#include "fedate/semisynthetic.hpp"
#include "oracles.hpp"

using namespace fedate;

namespace {

// tau_k by hand: dc + mu_k . dbeta, averaged with n_k / n
double hand_tau(const ScenarioConfig& cfg) {
  double total = 0.0, n = 0.0;
  for (const auto& s : cfg.studies) {
    double t = cfg.arm1.c - cfg.arm0.c;
    for (Eigen::Index j = 0; j < cfg.d; ++j) t += s.mu(j) * (cfg.arm1.beta(j) - cfg.arm0.beta(j));
    total += static_cast<double>(s.n) * t;
    n += static_cast<double>(s.n);
  }
  return total / n;
}

}  // namespace

TEST_CASE("default trial: true effect -1.1") {
  const TruthSummary t = true_ate(preset("homog-large"));
  CHECK(t.tau == doctest::Approx(-1.1).epsilon(1e-12));
  CHECK(t.p == doctest::Approx(0.5));
  CHECK(t.rho.sum() == doctest::Approx(1.0));
  CHECK(t.tau == doctest::Approx(t.rho.dot(t.tau_k)));
}

TEST_CASE("covariate-shift preset: effect from the listed means") {
  // (-1.1 + 1.4 + 0.15 - 1.475 + 2.65) / 5
  const ScenarioConfig cfg = preset("covariate-shift");
  CHECK(hand_tau(cfg) == doctest::Approx(0.325).epsilon(1e-12));
  CHECK(true_ate(cfg).tau == doctest::Approx(0.325).epsilon(1e-12));
}

TEST_CASE("null effect and hand-evaluated two-study effect") {
  ScenarioConfig cfg = preset("homog-small");
  cfg.arm1 = cfg.arm0;
  const TruthSummary t = true_ate(cfg);
  CHECK(t.tau == 0.0);
  CHECK(t.tau_k.cwiseAbs().maxCoeff() == 0.0);

  ScenarioConfig two;
  two.d = 4;
  two.arm0.beta = Vector::Zero(4);
  two.arm1.beta = Vector::Ones(4);
  for (int k = 0; k < 2; ++k) {
    StudySpec s;
    s.n = 100;
    s.mu = k == 0 ? Vector::Zero(4) : Vector::Ones(4);
    s.sigma = Matrix::Identity(4, 4);
    two.studies.push_back(s);
  }
  CHECK(true_ate(two).tau == doctest::Approx(2.0));  // d / 2
}

TEST_CASE("study effects never enter the true effect") {
  const ScenarioConfig a = preset("full-hetero");
  ScenarioConfig b = a;
  for (auto& s : b.studies) s.h = 0.0;
  CHECK(true_ate(a).tau == true_ate(b).tau);
}

TEST_CASE("quadratic truth matches a large-sample average") {
  const ScenarioConfig cfg = preset("nonlinear");
  RngStream rng(31, 0);
  double sum = 0.0;
  const std::size_t n = 400000;
  const auto& s = cfg.studies.front();
  const Matrix x = sample_mvn(s.mu, s.sigma, n, rng);
  for (Eigen::Index i = 0; i < x.rows(); ++i) sum += cfg.arm1.mean(x.row(i)) - cfg.arm0.mean(x.row(i));
  CHECK(sum / n == doctest::Approx(true_ate(cfg).tau).epsilon(0.02));
}

TEST_CASE("generate: reproducible, treatment rate, noise-free null") {
  const ScenarioConfig cfg = preset("unequal-p");
  RngStream a(32, 1), b(32, 1);
  const FederatedDataset x = generate(cfg, a), y = generate(cfg, b);
  for (std::size_t k = 0; k < cfg.K(); ++k) {
    CHECK(x.studies[k].covariates == y.studies[k].covariates);
    CHECK(x.studies[k].outcome == y.studies[k].outcome);
  }

  // treatment rate over many draws
  ScenarioConfig small = cfg;
  for (auto& s : small.studies) s.n = 50;
  small.min_arm_size = 0;
  std::vector<double> treated(cfg.K(), 0.0);
  const int draws = 400;
  for (int r = 0; r < draws; ++r) {
    RngStream rng(33, static_cast<std::uint64_t>(r));
    const auto fed = generate(small, rng);
    for (std::size_t k = 0; k < cfg.K(); ++k) treated[k] += static_cast<double>(fed.studies[k].n_arm(1));
  }
  for (std::size_t k = 0; k < cfg.K(); ++k) {
    const double total = 50.0 * draws, p = small.studies[k].p;
    CHECK(std::fabs(treated[k] / total - p) <= 3.0 * std::sqrt(p * (1 - p) / total));
  }

  ScenarioConfig null = preset("homog-small");
  null.sigma2 = 0.0;
  null.arm1 = null.arm0;
  RngStream rng(34, 0);
  const auto fed = generate(null, rng);
  for (const auto& s : fed.studies) {
    for (Eigen::Index i = 0; i < s.outcome.size(); ++i) {
      CHECK(s.outcome(i) == doctest::Approx(null.arm0.mean(s.covariates.row(i))).epsilon(1e-14));
    }
  }
}

TEST_CASE("min arm size is honoured") {
  const ScenarioConfig cfg = preset("full-hetero-small");
  for (int r = 0; r < 50; ++r) {
    RngStream rng(35, static_cast<std::uint64_t>(r));
    const auto fed = generate(cfg, rng);
    for (const auto& s : fed.studies) {
      CHECK(s.n_arm(0) >= cfg.min_arm_size);
      CHECK(s.n_arm(1) >= cfg.min_arm_size);
    }
  }
}

TEST_CASE("scenario validation and JSON round trip") {
  for (const auto& name : preset_names()) {
    const ScenarioConfig cfg = preset(name);
    CHECK_NOTHROW(cfg.validate());
    const ScenarioConfig back = scenario_from_json(scenario_to_json(cfg));
    CHECK(true_ate(back).tau == doctest::Approx(true_ate(cfg).tau).epsilon(1e-14));
    CHECK(back.K() == cfg.K());
    CHECK(back.studies.back().sigma.isApprox(cfg.studies.back().sigma));
  }
  ScenarioConfig bad = preset("homog-small");
  bad.studies[0].p = 1.0;
  CHECK_THROWS_AS(bad.validate(), Error);
  bad = preset("homog-small");
  bad.studies[0].sigma = Matrix::Ones(10, 10);
  CHECK_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("regeneration: covariates untouched, polynomial by hand, dimension guard") {
  const StandInDesign design;
  const FederatedDataset fed = stand_in_dataset(design);
  CHECK(fed.K() == 13);
  RngStream rng(36, 0);
  const RegenerationSpec spec = stand_in_outcomes(design, OutcomeMode::Polynomial);
  const FederatedDataset again = regenerate_outcomes(fed, spec, rng);
  for (std::size_t k = 0; k < fed.K(); ++k) CHECK(again.studies[k].covariates == fed.studies[k].covariates);

  OutcomeModel m;
  m.intercept = 0.5;
  m.coef = Vector::LinSpaced(6, 1.0, 6.0);
  m.interaction = Eigen::Vector2d(2.0, 3.0);
  Eigen::RowVectorXd x(6);
  x << 1, 1, 1, 1, 0, 2;
  // 0.5 + 1 + 2 + 3 + 4*1 + 5*0 + 6*2 + 2*(-1) + 3*(1)
  CHECK(m.mean(OutcomeMode::Polynomial, x) == doctest::Approx(23.5));
  x << 2, 3, -1, 0.5, 0, 0;
  // 0.5 + 1*2 + 2*9 + 3*(-1) + 4*0.5 + 2*(3) + 3*(1)
  CHECK(m.mean(OutcomeMode::Polynomial, x) == doctest::Approx(28.5));

  FederatedDataset narrow;
  narrow.d = 3;
  StudyDataset s;
  s.covariates = Matrix::Zero(4, 3);
  s.treatment = Eigen::VectorXi::Zero(4);
  s.outcome = Vector::Zero(4);
  narrow.studies = {s};
  RegenerationSpec poly;
  poly.mode = OutcomeMode::Polynomial;
  poly.arm1.coef = poly.arm0.coef = Vector::Zero(3);
  poly.p_by_study = Vector::Constant(1, 0.5);
  try {
    regenerate_outcomes(narrow, poly, rng);
    FAIL("expected DimensionError");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Dimension);
  }
}

TEST_CASE("regeneration with no noise and equal arms") {
  const StandInDesign design;
  const FederatedDataset fed = stand_in_dataset(design);
  RegenerationSpec spec = stand_in_outcomes(design, OutcomeMode::Linear);
  spec.arm1 = spec.arm0;
  spec.noise_sd = 0.0;
  RngStream rng(37, 0);
  const auto out = regenerate_outcomes(fed, spec, rng);
  CHECK(regenerated_ate(out, spec) == 0.0);
  // Y(1) = Y(0) row by row, so the outcome is the shared mean
  for (const auto& st : out.studies) {
    for (Eigen::Index i = 0; i < st.outcome.size(); ++i) {
      CHECK(st.outcome(i) == spec.arm0.mean(OutcomeMode::Linear, st.covariates.row(i)));
    }
  }
}

TEST_CASE("bootstrap: sizes kept, single row fixed, unit multiplicity") {
  FederatedDataset one;
  one.d = 1;
  StudyDataset s;
  s.covariates = Matrix::Constant(1, 1, 4.0);
  s.treatment = Eigen::VectorXi::Ones(1);
  s.outcome = Vector::Constant(1, 2.0);
  one.studies = {s};
  RngStream rng(38, 0);
  for (int r = 0; r < 10; ++r) {
    const auto b = bootstrap_resample(one, rng);
    CHECK(b.studies[0].covariates == s.covariates);
    CHECK(b.studies[0].outcome == s.outcome);
  }

  RngStream gen(39, 0);
  FederatedDataset fed = generate(preset("homog-small"), gen);
  // tag each row by its outcome to count multiplicities
  std::map<double, double> hits;
  const int resamples = 1000;
  for (int r = 0; r < resamples; ++r) {
    const auto b = bootstrap_resample(fed, rng);
    for (std::size_t k = 0; k < fed.K(); ++k) {
      CHECK(b.studies[k].n() == fed.studies[k].n());
      for (Eigen::Index i = 0; i < b.studies[k].outcome.size(); ++i) hits[b.studies[k].outcome(i)] += 1.0;
    }
  }
  double mean = 0.0;
  for (const auto& [key, count] : hits) mean += count / resamples;
  mean /= static_cast<double>(hits.size());
  CHECK(mean == doctest::Approx(1.0).epsilon(0.01));
  CHECK(hits.size() == fed.n());
}
