#include "fedate/fedavg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace fedate {

void FedAvgConfig::validate() const {
  if (T < 1) throw Error(ErrorKind::InvalidArgument, "FedAvg needs T >= 1");
  if (E < 1) throw Error(ErrorKind::InvalidArgument, "FedAvg needs E >= 1");
  if (eta && !(*eta > 0.0 && std::isfinite(*eta))) {
    throw Error(ErrorKind::InvalidArgument, "learning rate must be positive");
  }
  if (local_eta && !(local_eta->array() > 0.0).all()) {
    throw Error(ErrorKind::InvalidArgument, "local learning rates must be positive");
  }
  if (!(convergence_tol >= 0.0)) throw Error(ErrorKind::InvalidArgument, "convergence_tol must be >= 0");
}

double local_max_eigenvalue(const ArmView& view) {
  const Matrix gram = view.design.transpose() * view.design / static_cast<double>(view.rows());
  return max_eigenvalue(gram, 1e-12, 100000);
}

LearningRate select_learning_rate(const std::vector<double>& lambda_max, LearningRateMode mode) {
  if (lambda_max.empty()) throw Error(ErrorKind::InvalidArgument, "no studies");
  LearningRate out;
  out.mode = mode;
  if (mode == LearningRateMode::GlobalE1) {
    const double sum = std::accumulate(lambda_max.begin(), lambda_max.end(), 0.0);
    if (!(sum > 0.0)) throw Error(ErrorKind::InvalidArgument, "eigenvalues sum to zero");
    out.global = 2.0 / sum / 10.0;
  } else {
    out.local.resize(static_cast<Eigen::Index>(lambda_max.size()));
    for (std::size_t k = 0; k < lambda_max.size(); ++k) {
      if (!(lambda_max[k] > 0.0)) throw Error(ErrorKind::InvalidArgument, "zero local eigenvalue");
      out.local(static_cast<Eigen::Index>(k)) = 2.0 / lambda_max[k];
    }
  }
  return out;
}

LearningRate select_learning_rate(const std::vector<ArmView>& studies, LearningRateMode mode) {
  std::vector<double> lambda;
  lambda.reserve(studies.size());
  for (const auto& v : studies) lambda.push_back(local_max_eigenvalue(v));
  return select_learning_rate(lambda, mode);
}

double fedavg_loss(const std::vector<ArmView>& studies, const Vector& theta) {
  double total = 0.0;
  std::size_t n = 0;
  for (const auto& v : studies) {
    total += (v.response - v.design * theta).squaredNorm();
    n += v.rows();
  }
  return total / static_cast<double>(n);
}

namespace {

// One study's side of the protocol. Full-batch steps use the cached moments, so
// a step costs O(d^2) instead of O(n_k d).
struct LocalState {
  const ArmView* view;
  Matrix gram;  // X'X / n_k
  Vector moment;  // X'y / n_k
  std::vector<std::size_t> order;
};

}  // namespace

FedAvgResult run_fedavg(const std::vector<ArmView>& studies, const FedAvgConfig& cfg, int arm) {
  cfg.validate();
  if (studies.empty()) throw Error(ErrorKind::InvalidArgument, "FedAvg needs at least one study");
  const Eigen::Index p = studies.front().design.cols();
  for (const auto& v : studies) {
    if (v.design.cols() != p) throw Error(ErrorKind::Dimension, "studies disagree on design width");
    if (v.rows() == 0) throw Error(ErrorKind::EmptyArm, "FedAvg study with no rows");
  }
  const std::size_t K = studies.size();
  const auto floats = static_cast<std::size_t>(p);
  if (cfg.local_eta && cfg.local_eta->size() != static_cast<Eigen::Index>(K)) {
    throw Error(ErrorKind::Dimension, "one local learning rate per study required");
  }

  FedAvgResult out;
  out.ledger = CommLedger(K, cfg.keep_log);
  std::vector<LocalState> local(K);
  for (std::size_t k = 0; k < K; ++k) {
    const ArmView& v = studies[k];
    local[k].view = &v;
    const double nk = static_cast<double>(v.rows());
    if (cfg.B == 0 || cfg.B >= v.rows()) {
      local[k].gram = v.design.transpose() * v.design / nk;
      local[k].moment = v.design.transpose() * v.response / nk;
    } else {
      local[k].order.resize(v.rows());
      std::iota(local[k].order.begin(), local[k].order.end(), std::size_t{0});
    }
  }

  // The first upload of every study carries its arm size; the server needs it
  // for the averaging weights.
  std::vector<double> weight(K, 0.0);
  bool sizes_known = false;
  auto learn_sizes = [&]() {
    double total = 0.0;
    for (std::size_t k = 0; k < K; ++k) total += static_cast<double>(studies[k].rows());
    for (std::size_t k = 0; k < K; ++k) weight[k] = static_cast<double>(studies[k].rows()) / total;
    sizes_known = true;
  };

  Vector eta_k(static_cast<Eigen::Index>(K));
  bool send_eta = false;
  if (cfg.local_eta) {
    eta_k = *cfg.local_eta;
  } else if (cfg.eta) {
    eta_k.setConstant(*cfg.eta);
  } else {
    out.ledger.begin_round();
    std::vector<double> lambda(K);
    for (std::size_t k = 0; k < K; ++k) {
      lambda[k] = local_max_eigenvalue(studies[k]);
      out.ledger.charge(MessageKind::LocalEigen, Direction::Up, k, arm, 2);
    }
    learn_sizes();
    eta_k.setConstant(select_learning_rate(lambda, LearningRateMode::GlobalE1).global);
    send_eta = true;
  }
  out.eta = eta_k.maxCoeff();

  Vector theta = cfg.theta0 ? *cfg.theta0 : Vector::Zero(p);
  if (theta.size() != p) throw Error(ErrorKind::Dimension, "theta0 has the wrong length");

  // E = 1, full batch, one shared eta: the average of the local steps is one
  // step on the weighted moments. Same iterates up to rounding, one matvec per
  // round. Only taken when no per-message log is wanted.
  const bool full_batch = std::all_of(local.begin(), local.end(), [](const LocalState& s) { return s.order.empty(); });
  if (!cfg.keep_log && cfg.E == 1 && full_batch && !cfg.local_eta) {
    const bool eta_pending = send_eta;
    const bool sizes_pending = !sizes_known;
    learn_sizes();
    Matrix gram = Matrix::Zero(p, p);
    Vector moment = Vector::Zero(p);
    for (std::size_t k = 0; k < K; ++k) {
      gram.noalias() += weight[k] * local[k].gram;
      moment.noalias() += weight[k] * local[k].moment;
    }
    const double step = 2.0 * eta_k(0);
    Vector next(p);
    for (std::size_t t = 0; t < cfg.T; ++t) {
      next.noalias() = theta - step * (gram * theta - moment);
      const double norm = next.norm();
      if (!std::isfinite(norm) || norm > kDivergenceGuard) {
        std::ostringstream msg;
        msg << "parameter norm " << norm << " after round " << (t + 1) << "; learning rate too large";
        throw Error(ErrorKind::Divergence, msg.str());
      }
      out.last_step = (next - theta).norm();
      theta.swap(next);
      out.rounds_run = t + 1;
      if (cfg.convergence_tol > 0.0 && out.last_step <= cfg.convergence_tol) {
        out.converged = true;
        break;
      }
    }
    if (out.rounds_run > 0) {
      out.ledger.begin_rounds(out.rounds_run);
      for (std::size_t k = 0; k < K; ++k) {
        out.ledger.charge(MessageKind::GlobalTheta, Direction::Down, k, arm,
                          out.rounds_run * floats + (eta_pending ? 1 : 0));
        out.ledger.charge(MessageKind::LocalModel, Direction::Up, k, arm,
                          out.rounds_run * floats + (sizes_pending ? 1 : 0));
      }
    }
    if (cfg.convergence_tol == 0.0) out.converged = true;
    out.theta = theta;
    return out;
  }

  RngStream rng(cfg.seed, cfg.stream);
  std::vector<Vector> models(K, Vector(p));
  Vector grad(p);
  Vector next(p);

  for (std::size_t t = 0; t < cfg.T; ++t) {
    out.ledger.begin_round();
    for (std::size_t k = 0; k < K; ++k) {
      out.ledger.charge(MessageKind::GlobalTheta, Direction::Down, k, arm, floats + (send_eta ? 1 : 0));
    }
    send_eta = false;

    for (std::size_t k = 0; k < K; ++k) {
      LocalState& s = local[k];
      Vector& m = models[k];
      m = theta;
      const double step = eta_k(static_cast<Eigen::Index>(k));
      for (std::size_t e = 0; e < cfg.E; ++e) {
        if (s.order.empty()) {
          grad.noalias() = s.gram * m;
          grad -= s.moment;
          m.noalias() -= (2.0 * step) * grad;
        } else {
          // partial Fisher-Yates: the first B entries of order form the batch
          const std::size_t n = s.order.size();
          for (std::size_t i = 0; i < cfg.B; ++i) std::swap(s.order[i], s.order[i + rng.index(n - i)]);
          grad.setZero();
          for (std::size_t i = 0; i < cfg.B; ++i) {
            const auto r = static_cast<Eigen::Index>(s.order[i]);
            const double resid = s.view->response(r) - s.view->design.row(r).dot(m);
            grad.noalias() -= resid * s.view->design.row(r).transpose();
          }
          m.noalias() -= (2.0 * step / static_cast<double>(cfg.B)) * grad;
        }
      }
      out.ledger.charge(MessageKind::LocalModel, Direction::Up, k, arm, floats + (sizes_known ? 0 : 1));
    }
    if (!sizes_known) learn_sizes();

    next.setZero();
    for (std::size_t k = 0; k < K; ++k) next.noalias() += weight[k] * models[k];
    const double norm = next.norm();
    if (!std::isfinite(norm) || norm > kDivergenceGuard) {
      std::ostringstream msg;
      msg << "parameter norm " << norm << " after round " << (t + 1) << "; learning rate too large";
      throw Error(ErrorKind::Divergence, msg.str());
    }
    out.last_step = (next - theta).norm();
    theta.swap(next);
    out.rounds_run = t + 1;
    if (cfg.convergence_tol > 0.0 && out.last_step <= cfg.convergence_tol) {
      out.converged = true;
      break;
    }
  }
  if (cfg.convergence_tol == 0.0) out.converged = true;
  out.theta = theta;
  return out;
}

}  // namespace fedate
