#include "fedate/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace fedate {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::RankDeficient: return "RankDeficient";
    case ErrorKind::NoConvergence: return "NoConvergence";
    case ErrorKind::Divergence: return "Divergence";
    case ErrorKind::NotPositiveDefinite: return "NotPositiveDefinite";
    case ErrorKind::EmptyArm: return "EmptyArm";
    case ErrorKind::DegenerateArm: return "DegenerateArm";
    case ErrorKind::ZeroVariance: return "ZeroVariance";
    case ErrorKind::SingleStudy: return "SingleStudy";
    case ErrorKind::Dimension: return "DimensionError";
    case ErrorKind::FormulaInvalid: return "FormulaInvalid";
    case ErrorKind::Parse: return "ParseError";
    case ErrorKind::Schema: return "SchemaError";
    case ErrorKind::Value: return "ValueError";
    case ErrorKind::Io: return "IoError";
  }
  return "Unknown";
}

bool is_numerical(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::RankDeficient:
    case ErrorKind::NoConvergence:
    case ErrorKind::Divergence:
    case ErrorKind::NotPositiveDefinite:
    case ErrorKind::EmptyArm:
    case ErrorKind::DegenerateArm:
    case ErrorKind::ZeroVariance:
    case ErrorKind::FormulaInvalid:
      return true;
    default:
      return false;
  }
}

RngStream::RngStream(std::uint64_t seed, std::uint64_t stream) : seed_(seed), stream_(stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32),
                    0x9e3779b9u};
  engine_.seed(seq);
}

double RngStream::normal() { return normal_(engine_); }

double RngStream::uniform() { return uniform_(engine_); }

bool RngStream::bernoulli(double p) { return uniform() < p; }

std::size_t RngStream::index(std::size_t n) {
  if (n == 0) throw Error(ErrorKind::InvalidArgument, "index() over an empty range");
  std::uniform_int_distribution<std::size_t> dist(0, n - 1);
  return dist(engine_);
}

namespace {

double pivot_ratio(const Eigen::ColPivHouseholderQR<Matrix>& qr, Eigen::Index cols) {
  const auto& r = qr.matrixQR();
  double largest = 0.0;
  double smallest = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < cols; ++i) {
    const double v = std::abs(r(i, i));
    largest = std::max(largest, v);
    smallest = std::min(smallest, v);
  }
  if (largest == 0.0) return 0.0;
  const double ratio = smallest / largest;
  return ratio * ratio;
}

}  // namespace

Vector solve_least_squares(const Matrix& design, const Vector& response, double rank_tolerance) {
  if (design.rows() != response.size()) {
    throw Error(ErrorKind::Dimension, "response length does not match design rows");
  }
  if (design.cols() == 0) throw Error(ErrorKind::Dimension, "design has no columns");
  if (design.rows() < design.cols()) {
    std::ostringstream msg;
    msg << design.rows() << " rows for " << design.cols() << " columns";
    throw Error(ErrorKind::RankDeficient, msg.str());
  }
  Eigen::ColPivHouseholderQR<Matrix> qr(design);
  const double ratio = pivot_ratio(qr, design.cols());
  if (ratio < rank_tolerance) {
    std::ostringstream msg;
    msg << "Gram pivot ratio " << ratio << " below tolerance " << rank_tolerance;
    throw Error(ErrorKind::RankDeficient, msg.str());
  }
  return qr.solve(response);
}

bool is_full_column_rank(const Matrix& design, double rank_tolerance) {
  if (design.cols() == 0 || design.rows() < design.cols()) return false;
  Eigen::ColPivHouseholderQR<Matrix> qr(design);
  return pivot_ratio(qr, design.cols()) >= rank_tolerance;
}

Vector solve_symmetric(const Matrix& gram, const Vector& rhs, double rank_tolerance) {
  if (gram.rows() != gram.cols() || gram.rows() != rhs.size()) {
    throw Error(ErrorKind::Dimension, "solve_symmetric: shape mismatch");
  }
  Eigen::LDLT<Matrix> ldlt(gram);
  const Vector d = ldlt.vectorD();
  const double largest = d.cwiseAbs().maxCoeff();
  if (ldlt.info() != Eigen::Success || largest == 0.0 || d.minCoeff() <= 0.0 ||
      d.minCoeff() / largest < rank_tolerance) {
    throw Error(ErrorKind::RankDeficient, "aggregate Gram matrix is singular at tolerance");
  }
  return ldlt.solve(rhs);
}

double max_eigenvalue(const Matrix& gram, double rel_tol, std::size_t max_iter) {
  if (gram.rows() != gram.cols() || gram.rows() == 0) {
    throw Error(ErrorKind::Dimension, "max_eigenvalue needs a non-empty square matrix");
  }
  Vector v = Vector::Ones(gram.rows()).normalized();
  double lambda = v.dot(gram * v);
  for (std::size_t it = 0; it < max_iter; ++it) {
    Vector w = gram * v;
    const double norm = w.norm();
    if (norm == 0.0) return 0.0;
    v = w / norm;
    const double next = v.dot(gram * v);
    if (std::abs(next - lambda) <= rel_tol * std::abs(next)) return next;
    lambda = next;
  }
  throw Error(ErrorKind::NoConvergence, "power iteration exceeded max_iter");
}

Matrix cholesky_lower(const Matrix& covariance) {
  if (covariance.rows() != covariance.cols()) {
    throw Error(ErrorKind::Dimension, "covariance must be square");
  }
  Eigen::LLT<Matrix> llt(covariance);
  if (llt.info() != Eigen::Success) {
    throw Error(ErrorKind::NotPositiveDefinite, "Cholesky factorization failed");
  }
  Matrix lower = llt.matrixL();
  const double scale = covariance.diagonal().cwiseAbs().maxCoeff();
  for (Eigen::Index i = 0; i < lower.rows(); ++i) {
    const double pivot = lower(i, i) * lower(i, i);
    if (!(pivot > 1e-12 * scale)) {
      throw Error(ErrorKind::NotPositiveDefinite, "covariance is numerically singular");
    }
  }
  return lower;
}

Matrix sample_mvn(const Vector& mean, const Matrix& covariance, std::size_t n, RngStream& rng) {
  if (mean.size() != covariance.rows()) {
    throw Error(ErrorKind::Dimension, "mean and covariance sizes differ");
  }
  const Matrix lower = cholesky_lower(covariance);
  const Eigen::Index d = mean.size();
  Matrix out(static_cast<Eigen::Index>(n), d);
  Vector z(d);
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    for (Eigen::Index j = 0; j < d; ++j) z(j) = rng.normal();
    out.row(i) = (mean + lower.triangularView<Eigen::Lower>() * z).transpose();
  }
  return out;
}

}  // namespace fedate
