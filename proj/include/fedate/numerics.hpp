#pragma once

#include <cstddef>
#include <cstdint>
#include <random>

#include <Eigen/Dense>

#include "fedate/error.hpp"

namespace fedate {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

inline constexpr double kDefaultRankTolerance = 1e-10;

/// Reproducible random stream keyed by (seed, stream id).
///
/// Every source of randomness in the library takes one of these by reference.
/// Two streams with the same key yield identical draws; distinct stream ids are
/// decorrelated through std::seed_seq. A stream must not be shared between threads.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::uint64_t stream);

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t stream() const noexcept { return stream_; }

  double normal();
  double uniform();
  bool bernoulli(double p);
  // Uniform integer in [0, n).
  std::size_t index(std::size_t n);

  std::mt19937_64& engine() noexcept { return engine_; }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

// Least-squares solution of design * theta ~= response via column-pivoted QR.
// Throws RankDeficient when (min |R_ii| / max |R_ii|)^2, the pivot ratio of the
// Gram matrix, falls below rank_tolerance.
Vector solve_least_squares(const Matrix& design, const Vector& response,
                           double rank_tolerance = kDefaultRankTolerance);

// Same rank criterion as solve_least_squares, without solving anything.
bool is_full_column_rank(const Matrix& design, double rank_tolerance = kDefaultRankTolerance);

// Solves gram * x = rhs for a symmetric positive definite gram (pivoted LDLT).
Vector solve_symmetric(const Matrix& gram, const Vector& rhs,
                       double rank_tolerance = kDefaultRankTolerance);

// Largest eigenvalue of a symmetric PSD matrix by power iteration from the
// normalized all-ones vector. Stops once the Rayleigh quotient changes by at most
// rel_tol (relative); throws NoConvergence after max_iter iterations.
double max_eigenvalue(const Matrix& gram, double rel_tol = 1e-12, std::size_t max_iter = 100000);

// n i.i.d. rows from N(mean, covariance) through the lower Cholesky factor.
Matrix sample_mvn(const Vector& mean, const Matrix& covariance, std::size_t n, RngStream& rng);

// Lower Cholesky factor; NotPositiveDefinite on failure or a numerically null pivot.
Matrix cholesky_lower(const Matrix& covariance);

}  // namespace fedate
