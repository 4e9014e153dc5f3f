#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "fedate/estimators.hpp"
#include "fedate/scenarios.hpp"
#include "oracles.hpp"

using namespace fedate;

namespace {

StudyDataset make_study(int id, const Matrix& x, const std::vector<int>& w, const std::vector<double>& y) {
  StudyDataset s;
  s.study_id = id;
  s.covariates = x;
  s.treatment.resize(static_cast<Eigen::Index>(w.size()));
  s.outcome.resize(static_cast<Eigen::Index>(y.size()));
  for (std::size_t i = 0; i < w.size(); ++i) {
    s.treatment(static_cast<Eigen::Index>(i)) = w[i];
    s.outcome(static_cast<Eigen::Index>(i)) = y[i];
  }
  return s;
}

FederatedDataset single(const StudyDataset& s) {
  FederatedDataset f;
  f.d = s.d();
  f.studies = {s};
  return f;
}

GdOptions tight_gd() {
  GdOptions g;
  g.fedavg.T = 200000;
  g.fedavg.convergence_tol = 1e-13;
  g.fedavg.keep_log = false;
  return g;
}

void add_to_study(FederatedDataset& fed, std::size_t k, double h) {
  fed.studies[k].outcome.array() += h;
}

}  // namespace

TEST_CASE("fit_arm: exact fits and rank guard") {
  ArmView v{Matrix(2, 2), Vector(2)};
  v.design << 1, 0, 1, 1;
  v.response << 1, 3;
  const auto f = fit_arm(v);
  CHECK(f.theta_hat(0) == doctest::Approx(1.0));
  CHECK(f.theta_hat(1) == doctest::Approx(2.0));
  CHECK(f.residual_variance == 0.0);

  RngStream rng(1, 0);
  Matrix x(30, 4);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.normal();
  const Matrix design = with_intercept(x);
  Vector theta(5);
  theta << 0.5, -1, 2, 0.25, 3;
  const auto g = fit_arm(ArmView{design, design * theta});
  CHECK((g.theta_hat - theta).norm() <= 1e-10);

  try {
    fit_arm(ArmView{design.topRows(4), (design * theta).head(4)});
    FAIL("expected RankDeficient");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::RankDeficient);
  }
}

TEST_CASE("g_formula hand values") {
  Vector t1(2), t0 = Vector::Zero(2);
  t1 << 1, 1;
  Matrix eval(2, 2);
  eval << 1, 2, 1, 4;
  CHECK(g_formula(t1, t0, eval) == doctest::Approx(4.0));
  CHECK(g_formula(t1, t1, eval) == 0.0);
}

TEST_CASE("difference in means hand value") {
  Matrix x(4, 0);
  const auto s = make_study(1, x, {1, 1, 0, 0}, {3, 5, 1, 1});
  CHECK(dm(s).tau_hat == doctest::Approx(3.0));
  CHECK(dm(single(s)).tau_hat == doctest::Approx(3.0));
  const auto e = make_study(1, x, {1, 1, 0, 0}, {2, 4, 3, 3});
  CHECK(dm(e).tau_hat == 0.0);
  CHECK_THROWS_AS(dm(make_study(1, Matrix(2, 0), {1, 1}, {1, 2})), Error);
}

TEST_CASE("intercept-only G-formula is the difference in means") {
  RngStream rng(2, 0);
  for (int rep = 0; rep < 20; ++rep) {
    const std::size_t n = 10 + rng.index(20);
    std::vector<int> w(n);
    std::vector<double> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      w[i] = i % 3 == 0 ? 1 : 0;
      y[i] = 3.0 * rng.normal() + w[i];
    }
    const auto s = make_study(1, Matrix(static_cast<Eigen::Index>(n), 0), w, y);
    CHECK(std::fabs(local_tau(s).tau_hat - dm(s).tau_hat) <= 1e-12);
  }
}

TEST_CASE("local and pooled estimates against the normal-equation oracle") {
  for (int rep = 0; rep < 25; ++rep) {
    RngStream rng(3, static_cast<std::uint64_t>(rep));
    const auto fed = oracle::random_federation(2 + rep % 4, 1 + rep % 4, 15, rng);
    CHECK(pool_tau(fed, false).tau_hat == doctest::Approx(oracle::pooled_tau(fed)).epsilon(1e-9));
    for (const auto& s : fed.studies) {
      CHECK(local_tau(s).tau_hat == doctest::Approx(oracle::local_tau(s)).epsilon(1e-9));
    }
    CHECK(dm(fed).tau_hat == doctest::Approx(oracle::difference_in_means(fed)).epsilon(1e-12));
  }
}

TEST_CASE("noise-free data recovers the local effect") {
  RngStream rng(4, 0);
  const auto fed = oracle::random_federation(1, 3, 20, rng, 0.0);
  const auto& s = fed.studies.front();
  // tau_k = 1 + mean x'(b1 - b0); recover b1 - b0 from exact fits
  const auto f1 = fit_arm(split_by_arm(s, 1));
  const auto f0 = fit_arm(split_by_arm(s, 0));
  const double expected = g_formula(f1.theta_hat, f0.theta_hat, with_intercept(s.covariates));
  CHECK(local_tau(s).tau_hat == doctest::Approx(expected).epsilon(1e-12));
  CHECK(f1.theta_hat(0) == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(std::fabs(f0.theta_hat(0)) <= 1e-9);
}

TEST_CASE("meta aggregation hand values") {
  CHECK(meta_sw({1.0, 2.0}, {10.0, 30.0}) == doctest::Approx(1.75));
  CHECK(meta_sw({4.0}, {7.0}) == 4.0);
  CHECK(meta_sw({2.5, 2.5, 2.5}, {1.0, 5.0, 9.0}) == doctest::Approx(2.5));
  CHECK(meta_ivw({0.0, 5.0}, {1.0, 4.0}) == doctest::Approx(1.0));
  CHECK(meta_ivw({1.0, 2.0, 6.0}, {3.0, 3.0, 3.0}) == doctest::Approx(3.0));
  try {
    meta_ivw({1.0, 2.0}, {1.0, 0.0});
    FAIL("expected ZeroVariance");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::ZeroVariance);
  }
}

TEST_CASE("meta_ivw weights minimise the weighted variance over the simplex") {
  RngStream rng(5, 0);
  for (int rep = 0; rep < 50; ++rep) {
    const std::size_t K = 2 + rng.index(6);
    std::vector<double> v(K);
    for (auto& x : v) x = 0.1 + 5.0 * rng.uniform();
    // recover the weights from unit impulses
    std::vector<double> u(K);
    for (std::size_t k = 0; k < K; ++k) {
      std::vector<double> e(K, 0.0);
      e[k] = 1.0;
      u[k] = meta_ivw(e, v);
    }
    double sum = 0.0, best = 0.0, sw = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
      CHECK(u[k] >= 0.0);
      sum += u[k];
      best += u[k] * u[k] * v[k];
      sw += v[k] / static_cast<double>(K * K);
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(best <= sw * (1.0 + 1e-12));
    for (int draw = 0; draw < 100; ++draw) {
      std::vector<double> g(K);
      double t = 0.0;
      for (auto& x : g) t += (x = -std::log(1.0 - rng.uniform()));
      double val = 0.0;
      for (std::size_t k = 0; k < K; ++k) val += (g[k] / t) * (g[k] / t) * v[k];
      CHECK(best <= val * (1.0 + 1e-12));
    }
  }
}

TEST_CASE("plug-in local variance") {
  // no covariates, 50 rows per arm, residuals +-c: pooled variance 100 c^2 / 99 = 1
  const double c = std::sqrt(0.99);
  Matrix x(100, 0);
  std::vector<int> w(100);
  std::vector<double> y(100);
  for (int i = 0; i < 100; ++i) {
    w[static_cast<std::size_t>(i)] = i % 2;
    y[static_cast<std::size_t>(i)] = (i / 2) % 2 == 0 ? c : -c;
  }
  const auto s = make_study(1, x, w, y);
  const auto fits = fit_arm_models(split_by_arm(s, 1), split_by_arm(s, 0));
  CHECK(fits.treated.theta_hat.norm() <= 1e-12);
  CHECK(fits.control.theta_hat.norm() <= 1e-12);
  CHECK(plugin_local_variance(fits, s) == doctest::Approx(0.04).epsilon(1e-12));

  std::vector<double> zero(100, 0.0);
  const auto z = make_study(1, x, w, zero);
  const auto zf = fit_arm_models(split_by_arm(z, 1), split_by_arm(z, 0));
  CHECK(plugin_local_variance(zf, z) == 0.0);

  std::vector<int> all(100, 1);
  CHECK_THROWS_AS(plugin_local_variance(fits, make_study(1, x, all, y)), Error);
}

TEST_CASE("plug-in variance against a hand computation") {
  RngStream rng(6, 0);
  const auto fed = oracle::random_federation(1, 3, 40, rng);
  const auto& s = fed.studies.front();
  const auto a = oracle::split(s);
  const auto t1 = oracle::ols(a.x[1], a.y[1]);
  const auto t0 = oracle::ols(a.x[0], a.y[0]);
  double rss = 0.0;
  for (int w : {0, 1}) {
    const auto& t = w == 1 ? t1 : t0;
    for (std::size_t i = 0; i < a.x[w].size(); ++i) {
      const double r = a.y[w][i] - oracle::predict(t, a.x[w][i]);
      rss += r * r;
    }
  }
  const double n = static_cast<double>(s.n());
  const double d = 3.0;
  const double p = static_cast<double>(a.x[1].size()) / n;
  std::vector<double> mean(3, 0.0);
  for (const auto& r : a.all)
    for (int j = 0; j < 3; ++j) mean[static_cast<std::size_t>(j)] += r[static_cast<std::size_t>(j)] / n;
  double spread = 0.0;
  for (const auto& r : a.all) {
    double q = 0.0;
    for (std::size_t j = 0; j < 3; ++j) q += (r[j] - mean[j]) * (t1[j + 1] - t0[j + 1]);
    spread += q * q / (n - 1.0);
  }
  const double expected = rss / (n - d - 1.0) / (n * p * (1.0 - p)) + spread / n;
  const auto fits = fit_arm_models(split_by_arm(s, 1), split_by_arm(s, 0));
  CHECK(plugin_local_variance(fits, s) == doctest::Approx(expected).epsilon(1e-10));
  REQUIRE(local_tau(s).plugin_variance.has_value());
  CHECK(*local_tau(s).plugin_variance == doctest::Approx(expected).epsilon(1e-10));
}

TEST_CASE("one-shot theta: SW hand value and IVW equals pooled OLS") {
  ArmFit a, b;
  a.theta_hat = Vector::Constant(2, 1.0);
  a.n_arm = 1;
  b.theta_hat = Vector::Constant(2, 3.0);
  b.n_arm = 3;
  const Vector sw = one_shot_theta({a, b}, Aggregation::SW);
  CHECK(sw(0) == doctest::Approx(2.5));
  CHECK(sw(1) == doctest::Approx(2.5));

  for (int rep = 0; rep < 100; ++rep) {
    RngStream rng(7, static_cast<std::uint64_t>(rep));
    const auto fed = oracle::random_federation(2 + rep % 5, 1 + rep % 6, 16, rng);
    for (int arm : {0, 1}) {
      std::vector<ArmFit> fits;
      for (const auto& s : fed.studies) fits.push_back(fit_arm(split_by_arm(s, arm)));
      const Vector ivw = one_shot_theta(fits, Aggregation::IVW);
      const Vector pooled = fit_arm(pooled_arm(fed, arm)).theta_hat;
      CHECK((ivw - pooled).norm() <= 1e-8 * pooled.norm());
      if (rep == 0) {
        const Vector only = one_shot_theta({fits.front()}, Aggregation::SW);
        CHECK((only - fits.front().theta_hat).norm() == 0.0);
        const Vector only_ivw = one_shot_theta({fits.front()}, Aggregation::IVW);
        CHECK((only_ivw - fits.front().theta_hat).norm() <= 1e-10 * (1.0 + only.norm()));
      }
    }
    CHECK(one_shot_tau(fed, Aggregation::IVW, false).tau_hat ==
          doctest::Approx(pool_tau(fed, false).tau_hat).epsilon(1e-8));
  }
}

TEST_CASE("one-shot beta weights: SW and centered Gram") {
  std::vector<Vector> betas = {Vector::Constant(2, 1.0), Vector::Constant(2, 4.0)};
  const Vector sw = one_shot_beta(betas, {2, 1}, {}, Aggregation::SW);
  CHECK(sw(0) == doctest::Approx(2.0));
  Matrix g1 = Matrix::Identity(2, 2), g2 = 2.0 * Matrix::Identity(2, 2);
  const Vector ivw = one_shot_beta(betas, {}, {g1, g2}, Aggregation::IVW);
  CHECK(ivw(1) == doctest::Approx(3.0));

  RngStream rng(8, 0);
  const auto fed = oracle::random_federation(1, 2, 20, rng);
  const ArmView v = split_by_arm(fed.studies.front(), 1);
  const Matrix x = v.design.rightCols(2);
  const Matrix xc = x.rowwise() - x.colwise().mean();
  CHECK((centered_gram(v) - xc.transpose() * xc).norm() <= 1e-10);
}

TEST_CASE("K = 1 reductions") {
  RngStream rng(9, 0);
  const auto fed = oracle::random_federation(1, 3, 20, rng);
  const double local = local_tau(fed.studies.front()).tau_hat;
  CHECK(pool_tau(fed, false).tau_hat == doctest::Approx(local).epsilon(1e-10));
  CHECK(meta_tau(fed, Aggregation::SW).tau_hat == doctest::Approx(local).epsilon(1e-12));
  CHECK(meta_tau(fed, Aggregation::IVW).tau_hat == doctest::Approx(local).epsilon(1e-12));
  for (auto mode : {Aggregation::SW, Aggregation::IVW}) {
    CHECK(one_shot_tau(fed, mode, false).tau_hat == doctest::Approx(local).epsilon(1e-10));
    CHECK(one_shot_tau(fed, mode, true).tau_hat == doctest::Approx(local).epsilon(1e-10));
  }
}

TEST_CASE("GD reaches the pooled estimate; adjusted GD reaches the adjusted pool") {
  RngStream rng(10, 0);
  const auto fed = oracle::random_federation(3, 2, 25, rng);
  const auto g = tight_gd();
  CHECK(std::fabs(gd_tau(fed, g, false).tau_hat - pool_tau(fed, false).tau_hat) <= 1e-6);
  CHECK(std::fabs(gd_tau(fed, g, true).tau_hat - pool_tau(fed, true).tau_hat) <= 1e-6);

  GdOptions capped;
  capped.fedavg.T = 3;
  try {
    gd_tau(fed, capped, false);
    FAIL("expected NoConvergence");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::NoConvergence);
  }
  capped.require_convergence = false;
  CHECK_NOTHROW(gd_tau(fed, capped, false));
}

TEST_CASE("per-study outcome shifts leave the study-aware estimators unchanged") {
  RngStream rng(11, 0);
  const auto fed = oracle::random_federation(4, 3, 20, rng);
  auto shifted = fed;
  const double h[] = {1.0, 0.2, -1.0, 30.0};
  for (std::size_t k = 0; k < 4; ++k) add_to_study(shifted, k, h[k]);

  for (std::size_t k = 0; k < 4; ++k) {
    CHECK(std::fabs(local_tau(fed.studies[k]).tau_hat - local_tau(shifted.studies[k]).tau_hat) <= 1e-10);
  }
  auto same = [&](const EstimatorId& id, double tol) {
    EstimateOptions o;
    o.gd = tight_gd();
    const double a = estimate(fed, id, o).tau_hat;
    const double b = estimate(shifted, id, o).tau_hat;
    INFO(estimator_name(id));
    CHECK(std::fabs(a - b) <= tol);
  };
  same({EstimatorKind::MetaSW, 0}, 1e-10);
  same({EstimatorKind::MetaIVW, 0}, 1e-10);
  same({EstimatorKind::OneShotSWAdj, 0}, 1e-10);
  same({EstimatorKind::OneShotIVWAdj, 0}, 1e-10);
  same({EstimatorKind::PoolAdj, 0}, 1e-10);
  // FedAvg stops on a step tolerance, so the shifted start point shows at that scale
  same({EstimatorKind::GDAdj, 0}, 1e-7);
}

TEST_CASE("null effect: every estimator returns zero") {
  RngStream rng(12, 0);
  auto fed = oracle::random_federation(3, 2, 20, rng, 0.0);
  // same noise-free model in both arms, each covariate row seen once per arm
  for (auto& s : fed.studies) {
    const Eigen::Index even = s.outcome.size() / 2 * 2;
    s.covariates.conservativeResize(even, Eigen::NoChange);
    s.treatment.conservativeResize(even);
    s.outcome.conservativeResize(even);
    for (Eigen::Index i = 0; i < even; ++i) {
      if (i % 2 == 1) s.covariates.row(i) = s.covariates.row(i - 1);
      s.outcome(i) = 0.5 + 2.0 * s.covariates(i, 0) - s.covariates(i, 1);
    }
  }
  EstimateOptions o;
  o.gd = tight_gd();
  for (const auto& id : all_estimators()) {
    INFO(estimator_name(id));
    if (id.kind == EstimatorKind::MetaIVW) {
      // zero residual variance and equal slopes: no finite inverse-variance weights
      try {
        estimate(fed, id, o);
        FAIL("expected ZeroVariance");
      } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::ZeroVariance);
      }
      continue;
    }
    CHECK(std::fabs(estimate(fed, id, o).tau_hat) <= 1e-10);
  }
}

TEST_CASE("aggregation weights are nonnegative and sum to one") {
  RngStream rng(13, 0);
  for (int rep = 0; rep < 20; ++rep) {
    const std::size_t K = 2 + rng.index(5);
    std::vector<double> sizes(K), vars(K);
    for (std::size_t k = 0; k < K; ++k) {
      sizes[k] = 1.0 + static_cast<double>(rng.index(100));
      vars[k] = 0.01 + rng.uniform();
    }
    double s = 0.0, v = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
      std::vector<double> e(K, 0.0);
      e[k] = 1.0;
      const double ws = meta_sw(e, sizes), wv = meta_ivw(e, vars);
      CHECK(ws >= 0.0);
      CHECK(wv >= 0.0);
      s += ws;
      v += wv;
    }
    CHECK(std::fabs(s - 1.0) <= 1e-12);
    CHECK(std::fabs(v - 1.0) <= 1e-12);
  }
}

TEST_CASE("names round-trip") {
  for (const auto& id : all_estimators()) CHECK(parse_estimator(estimator_name(id)) == id);
  CHECK(parse_estimator("local:3") == EstimatorId{EstimatorKind::Local, 3});
  CHECK_THROWS_AS(parse_estimator("nope"), Error);
}

TEST_CASE("study effects with unequal p bias the unadjusted pool, not the adjusted one") {
  auto cfg = preset("study-effects-unequal-p");
  const double tau = true_ate(cfg).tau;
  const int reps = 300;
  double sum[2] = {0, 0}, sq[2] = {0, 0};
  for (int r = 0; r < reps; ++r) {
    RngStream rng(14, static_cast<std::uint64_t>(r));
    const auto fed = generate(cfg, rng);
    for (int adj : {0, 1}) {
      const double t = pool_tau(fed, adj == 1).tau_hat;
      sum[adj] += t;
      sq[adj] += t * t;
    }
  }
  for (int adj : {0, 1}) {
    const double m = sum[adj] / reps;
    const double se = std::sqrt((sq[adj] / reps - m * m) / reps);
    if (adj == 0) {
      CHECK(std::fabs(m - tau) > 5.0 * se);
    } else {
      CHECK(std::fabs(m - tau) < 3.5 * se);
    }
  }
}
