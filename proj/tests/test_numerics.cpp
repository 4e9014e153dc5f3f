#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "fedate/numerics.hpp"
#include "oracles.hpp"

using namespace fedate;

TEST_CASE("least squares: constant response on an intercept") {
  Matrix x = Matrix::Ones(3, 1);
  Vector y = Vector::Constant(3, 2.0);
  CHECK(solve_least_squares(x, y)(0) == doctest::Approx(2.0));
}

TEST_CASE("least squares: 2x2 hand solve") {
  Matrix x(2, 2);
  x << 1, 0, 1, 1;
  Vector y(2);
  y << 1, 3;
  const Vector t = solve_least_squares(x, y);
  CHECK(t(0) == doctest::Approx(1.0));
  CHECK(t(1) == doctest::Approx(2.0));
}

TEST_CASE("least squares: duplicated column is rank deficient") {
  Matrix x(4, 3);
  x << 1, 2, 2, 1, 3, 3, 1, 5, 5, 1, 7, 7;
  Vector y = Vector::LinSpaced(4, 0, 3);
  try {
    solve_least_squares(x, y);
    FAIL("expected RankDeficient");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::RankDeficient);
  }
  CHECK_FALSE(is_full_column_rank(x));
}

TEST_CASE("least squares matches Gauss-Jordan normal equations on random 5x3 systems") {
  RngStream rng(11, 0);
  for (int rep = 0; rep < 200; ++rep) {
    Matrix x(5, 3);
    Vector y(5);
    for (int i = 0; i < 5; ++i) {
      for (int j = 0; j < 3; ++j) x(i, j) = rng.normal();
      y(i) = rng.normal();
    }
    oracle::Rows g(3, std::vector<double>(3, 0.0));
    std::vector<double> m(3, 0.0);
    for (int a = 0; a < 3; ++a) {
      for (int i = 0; i < 5; ++i) m[a] += x(i, a) * y(i);
      for (int b = 0; b < 3; ++b) {
        for (int i = 0; i < 5; ++i) g[a][b] += x(i, a) * x(i, b);
      }
    }
    const auto ref = oracle::gauss_jordan(g, m);
    const Vector got = solve_least_squares(x, y);
    const Vector want = Eigen::Map<const Vector>(ref.data(), 3);
    CHECK((got - want).norm() <= 1e-10 * want.norm());
    // residual orthogonality
    const Vector xr = x.transpose() * (y - x * got);
    CHECK(xr.cwiseAbs().maxCoeff() <= 1e-8 * (x.transpose() * y).cwiseAbs().maxCoeff());
  }
}

TEST_CASE("power iteration: known spectra") {
  CHECK(max_eigenvalue(Matrix::Identity(3, 3)) == doctest::Approx(1.0));
  Matrix d = Matrix::Zero(2, 2);
  d(0, 0) = 2.0;
  d(1, 1) = 1.0;
  CHECK(max_eigenvalue(d) == doctest::Approx(2.0).epsilon(1e-9));
  Matrix g(2, 2);
  g << 2, 1, 1, 2;
  CHECK(max_eigenvalue(g) == doctest::Approx(3.0).epsilon(1e-9));
}

TEST_CASE("power iteration: Rayleigh bound on random PSD matrices") {
  RngStream rng(12, 0);
  for (int rep = 0; rep < 100; ++rep) {
    Matrix a(6, 4);
    for (int i = 0; i < 6; ++i) {
      for (int j = 0; j < 4; ++j) a(i, j) = rng.normal();
    }
    const Matrix g = a.transpose() * a;
    const double lam = max_eigenvalue(g);
    for (int probe = 0; probe < 10; ++probe) {
      Vector v(4);
      for (int j = 0; j < 4; ++j) v(j) = rng.normal();
      CHECK(lam >= v.dot(g * v) / v.dot(v) * (1.0 - 1e-9));
    }
  }
}

TEST_CASE("power iteration: iteration cap") {
  Matrix g(2, 2);
  g << 1.0, 0.0, 0.0, 0.9;
  // close eigenvalues converge slowly; three iterations cannot reach 1e-15
  try {
    max_eigenvalue(g, 1e-15, 3);
    FAIL("expected NoConvergence");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::NoConvergence);
  }
}

TEST_CASE("mvn sampling: moments") {
  RngStream rng(13, 0);
  const Matrix z = sample_mvn(Vector::Zero(3), Matrix::Identity(3, 3), 100000, rng);
  const Eigen::RowVectorXd mean = z.colwise().mean();
  CHECK(mean.cwiseAbs().maxCoeff() < 0.02);

  const Eigen::Index d = 10;
  Matrix target = 0.5 * Matrix::Identity(d, d) + 0.5 * Matrix::Ones(d, d);
  RngStream rng2(14, 0);
  const Matrix x = sample_mvn(Vector::Zero(d), target, 100000, rng2);
  const Eigen::RowVectorXd m = x.colwise().mean();
  const Matrix c = x.rowwise() - m;
  const Matrix cov = c.transpose() * c / static_cast<double>(x.rows() - 1);
  CHECK((cov - target).cwiseAbs().maxCoeff() < 0.02);
}

TEST_CASE("mvn sampling: singular covariance") {
  RngStream rng(15, 0);
  Matrix s = Matrix::Ones(2, 2);
  try {
    sample_mvn(Vector::Zero(2), s, 10, rng);
    FAIL("expected NotPositiveDefinite");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::NotPositiveDefinite);
  }
}

TEST_CASE("rng streams: same key same draws, different key different draws") {
  RngStream a(7, 3), b(7, 3), c(7, 4);
  const Matrix s = Matrix::Identity(4, 4);
  const Matrix xa = sample_mvn(Vector::Zero(4), s, 50, a);
  const Matrix xb = sample_mvn(Vector::Zero(4), s, 50, b);
  const Matrix xc = sample_mvn(Vector::Zero(4), s, 50, c);
  CHECK(xa == xb);
  CHECK_FALSE(xa == xc);
}

TEST_CASE("rng streams: neighbouring stream ids look independent") {
  // correlation of first draws across 2000 consecutive stream ids
  std::vector<double> u, v;
  for (std::uint64_t s = 0; s < 2000; ++s) {
    RngStream a(99, s), b(99, s + 1);
    u.push_back(a.normal());
    v.push_back(b.normal());
  }
  double su = 0, sv = 0, suv = 0, suu = 0, svv = 0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    su += u[i];
    sv += v[i];
  }
  su /= u.size();
  sv /= v.size();
  for (std::size_t i = 0; i < u.size(); ++i) {
    suv += (u[i] - su) * (v[i] - sv);
    suu += (u[i] - su) * (u[i] - su);
    svv += (v[i] - sv) * (v[i] - sv);
  }
  CHECK(std::fabs(suv / std::sqrt(suu * svv)) < 0.1);
}
