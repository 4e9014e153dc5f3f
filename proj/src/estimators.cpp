#include "fedate/estimators.hpp"

#include <charconv>
#include <cmath>
#include <sstream>

namespace fedate {

namespace {

struct NamedKind {
  EstimatorKind kind;
  std::string_view name;
};

constexpr NamedKind kNames[] = {
    {EstimatorKind::DM, "dm"},
    {EstimatorKind::Pool, "pool"},
    {EstimatorKind::PoolAdj, "pool-adj"},
    {EstimatorKind::MetaSW, "meta-sw"},
    {EstimatorKind::MetaIVW, "meta-ivw"},
    {EstimatorKind::OneShotSW, "1s-sw"},
    {EstimatorKind::OneShotIVW, "1s-ivw"},
    {EstimatorKind::OneShotSWAdj, "1s-sw-adj"},
    {EstimatorKind::OneShotIVWAdj, "1s-ivw-adj"},
    {EstimatorKind::GD, "gd"},
    {EstimatorKind::GDAdj, "gd-adj"},
};

}  // namespace

std::string estimator_name(const EstimatorId& id) {
  if (id.kind == EstimatorKind::Local) return "local:" + std::to_string(id.study);
  for (const auto& n : kNames) {
    if (n.kind == id.kind) return std::string(n.name);
  }
  return "unknown";
}

EstimatorId parse_estimator(std::string_view name) {
  for (const auto& n : kNames) {
    if (n.name == name) return {n.kind, 0};
  }
  constexpr std::string_view local = "local:";
  if (name.substr(0, local.size()) == local) {
    const auto digits = name.substr(local.size());
    std::size_t k = 0;
    auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), k);
    if (ec == std::errc() && ptr == digits.data() + digits.size() && k >= 1) {
      return {EstimatorKind::Local, k};
    }
  }
  throw Error(ErrorKind::Value, "unknown estimator '" + std::string(name) + "'");
}

std::vector<EstimatorId> all_estimators() {
  std::vector<EstimatorId> out;
  for (const auto& n : kNames) out.push_back({n.kind, 0});
  return out;
}

bool is_adjusted(EstimatorKind kind) {
  return kind == EstimatorKind::PoolAdj || kind == EstimatorKind::GDAdj ||
         kind == EstimatorKind::OneShotSWAdj || kind == EstimatorKind::OneShotIVWAdj;
}

ArmFit fit_arm(const ArmView& view, double rank_tolerance) {
  if (view.rows() == 0) throw Error(ErrorKind::EmptyArm, "cannot fit an empty arm");
  ArmFit fit;
  fit.theta_hat = solve_least_squares(view.design, view.response, rank_tolerance);
  fit.gram = view.design.transpose() * view.design;
  fit.n_arm = view.rows();
  fit.rss = (view.response - view.design * fit.theta_hat).squaredNorm();
  // an interpolating fit leaves only rounding noise
  if (fit.rss <= 1e-24 * std::max(1.0, view.response.squaredNorm())) fit.rss = 0.0;
  const auto cols = static_cast<std::size_t>(view.design.cols());
  fit.residual_variance = fit.n_arm > cols ? fit.rss / static_cast<double>(fit.n_arm - cols) : 0.0;
  return fit;
}

ArmFits fit_arm_models(const ArmView& treated, const ArmView& control, double rank_tolerance) {
  return {fit_arm(treated, rank_tolerance), fit_arm(control, rank_tolerance)};
}

double g_formula(const Vector& theta1, const Vector& theta0, const Matrix& eval_design) {
  if (theta1.size() != eval_design.cols() || theta0.size() != eval_design.cols()) {
    throw Error(ErrorKind::Dimension, "parameter length differs from design width");
  }
  if (eval_design.rows() == 0) throw Error(ErrorKind::Dimension, "empty evaluation design");
  const Vector diff = theta1 - theta0;
  return (eval_design * diff).mean();
}

namespace {

CommLedger ledger_for(const FederatedDataset& fed) { return CommLedger(fed.K()); }

Matrix full_design(const StudyDataset& ds) { return with_intercept(ds.covariates); }

Matrix pooled_design(const FederatedDataset& fed) {
  Matrix out(static_cast<Eigen::Index>(fed.n()), fed.d + 1);
  Eigen::Index r = 0;
  for (const auto& s : fed.studies) {
    out.block(r, 0, s.covariates.rows(), 1).setOnes();
    out.block(r, 1, s.covariates.rows(), fed.d) = s.covariates;
    r += s.covariates.rows();
  }
  return out;
}

void require_studies(const FederatedDataset& fed) {
  if (fed.K() == 0) throw Error(ErrorKind::InvalidArgument, "no studies");
}

}  // namespace

EstimateReport dm(const StudyDataset& ds) {
  double sum[2] = {0.0, 0.0};
  std::size_t count[2] = {0, 0};
  for (Eigen::Index i = 0; i < ds.outcome.size(); ++i) {
    sum[ds.treatment(i)] += ds.outcome(i);
    ++count[ds.treatment(i)];
  }
  if (count[0] == 0 || count[1] == 0) throw Error(ErrorKind::EmptyArm, "difference in means needs both arms");
  EstimateReport r;
  r.id = {EstimatorKind::DM, 0};
  r.tau_hat = sum[1] / static_cast<double>(count[1]) - sum[0] / static_cast<double>(count[0]);
  r.comm = CommLedger(1);
  return r;
}

EstimateReport dm(const FederatedDataset& fed) {
  require_studies(fed);
  EstimateReport r;
  r.id = {EstimatorKind::DM, 0};
  r.comm = ledger_for(fed);
  r.comm.begin_round();
  std::vector<Message> inbox;
  for (std::size_t k = 0; k < fed.K(); ++k) {
    const auto& s = fed.studies[k];
    Message m{MessageKind::LocalATE, Direction::Up, k, -1, {0.0, 0.0, 0.0, 0.0}};
    for (Eigen::Index i = 0; i < s.outcome.size(); ++i) {
      const std::size_t off = s.treatment(i) == 1 ? 0 : 2;
      m.payload[off] += s.outcome(i);
      m.payload[off + 1] += 1.0;
    }
    r.comm.record(m);
    inbox.push_back(std::move(m));
  }
  double s1 = 0.0, n1 = 0.0, s0 = 0.0, n0 = 0.0;
  for (const auto& m : inbox) {
    s1 += m.payload[0];
    n1 += m.payload[1];
    s0 += m.payload[2];
    n0 += m.payload[3];
  }
  if (n1 == 0.0 || n0 == 0.0) throw Error(ErrorKind::EmptyArm, "difference in means needs both arms");
  r.tau_hat = s1 / n1 - s0 / n0;
  return r;
}

double plugin_local_variance(const ArmFits& fits, const StudyDataset& ds) {
  const std::size_t n = ds.n();
  const std::size_t n1 = ds.n_arm(1);
  const auto d = static_cast<std::size_t>(ds.d());
  if (n1 == 0 || n1 == n) throw Error(ErrorKind::DegenerateArm, "estimated treatment probability is 0 or 1");
  if (n <= d + 1) throw Error(ErrorKind::DegenerateArm, "residual variance denominator n - d - 1 <= 0");
  const double nd = static_cast<double>(n);
  const double p_hat = static_cast<double>(n1) / nd;
  const double sigma2 = (fits.treated.rss + fits.control.rss) / static_cast<double>(n - d - 1);
  double spread = 0.0;
  if (d > 0) {
    const Vector dbeta = fits.treated.theta_hat.tail(ds.d()) - fits.control.theta_hat.tail(ds.d());
    const Eigen::RowVectorXd mean = ds.covariates.colwise().mean();
    const Matrix centered = ds.covariates.rowwise() - mean;
    const Vector proj = centered * dbeta;
    spread = proj.squaredNorm() / (nd - 1.0);
  }
  return sigma2 / nd / (p_hat * (1.0 - p_hat)) + spread / nd;
}

EstimateReport local_tau(const StudyDataset& ds, double rank_tolerance) {
  const ArmFits fits = fit_arm_models(split_by_arm(ds, 1), split_by_arm(ds, 0), rank_tolerance);
  EstimateReport r;
  r.id = {EstimatorKind::Local, static_cast<std::size_t>(ds.study_id)};
  r.tau_hat = g_formula(fits.treated.theta_hat, fits.control.theta_hat, full_design(ds));
  const auto need = static_cast<std::size_t>(ds.d()) + 2;
  if (fits.treated.n_arm >= need && fits.control.n_arm >= need) {
    r.plugin_variance = plugin_local_variance(fits, ds);
  }
  r.comm = CommLedger(1);
  return r;
}

EstimateReport pool_tau(const FederatedDataset& fed, bool adjusted, double rank_tolerance) {
  require_studies(fed);
  const FederatedDataset& data = fed;
  FederatedDataset augmented;
  if (adjusted) augmented = augment_dummies(fed);
  const FederatedDataset& use = adjusted ? augmented : data;
  const ArmFits fits = fit_arm_models(pooled_arm(use, 1), pooled_arm(use, 0), rank_tolerance);
  EstimateReport r;
  r.id = {adjusted ? EstimatorKind::PoolAdj : EstimatorKind::Pool, 0};
  r.tau_hat = g_formula(fits.treated.theta_hat, fits.control.theta_hat, pooled_design(use));
  // centralized reference: no federated protocol, hence an empty ledger
  r.comm = ledger_for(fed);
  return r;
}

double meta_sw(const std::vector<double>& tau, const std::vector<double>& sizes) {
  if (tau.empty() || tau.size() != sizes.size()) throw Error(ErrorKind::Dimension, "one size per local estimate");
  double total = 0.0;
  for (double n : sizes) {
    if (!(n > 0.0)) throw Error(ErrorKind::Value, "study sizes must be positive");
    total += n;
  }
  double out = 0.0;
  for (std::size_t k = 0; k < tau.size(); ++k) out += sizes[k] / total * tau[k];
  return out;
}

double meta_ivw(const std::vector<double>& tau, const std::vector<double>& variances) {
  if (tau.empty() || tau.size() != variances.size()) {
    throw Error(ErrorKind::Dimension, "one variance per local estimate");
  }
  double total = 0.0;
  for (double v : variances) {
    if (!(v > 0.0) || !std::isfinite(v)) throw Error(ErrorKind::ZeroVariance, "local variance must be positive and finite");
    total += 1.0 / v;
  }
  double out = 0.0;
  for (std::size_t k = 0; k < tau.size(); ++k) out += (1.0 / variances[k]) / total * tau[k];
  return out;
}

EstimateReport meta_tau(const FederatedDataset& fed, Aggregation mode, double rank_tolerance) {
  require_studies(fed);
  EstimateReport r;
  r.id = {mode == Aggregation::SW ? EstimatorKind::MetaSW : EstimatorKind::MetaIVW, 0};
  r.comm = ledger_for(fed);
  r.comm.begin_round();
  std::vector<Message> inbox;
  for (std::size_t k = 0; k < fed.K(); ++k) {
    const auto& s = fed.studies[k];
    const ArmFits fits = fit_arm_models(split_by_arm(s, 1), split_by_arm(s, 0), rank_tolerance);
    const double tau_k = g_formula(fits.treated.theta_hat, fits.control.theta_hat, full_design(s));
    const double second = mode == Aggregation::SW ? static_cast<double>(s.n()) : plugin_local_variance(fits, s);
    Message m{MessageKind::LocalATE, Direction::Up, k, -1, {tau_k, second}};
    r.comm.record(m);
    inbox.push_back(std::move(m));
  }
  std::vector<double> tau, second;
  for (const auto& m : inbox) {
    tau.push_back(m.payload[0]);
    second.push_back(m.payload[1]);
  }
  r.tau_hat = mode == Aggregation::SW ? meta_sw(tau, second) : meta_ivw(tau, second);
  return r;
}

Vector one_shot_theta(const std::vector<ArmFit>& fits, Aggregation mode, double rank_tolerance) {
  if (fits.empty()) throw Error(ErrorKind::InvalidArgument, "no local fits");
  const Eigen::Index p = fits.front().theta_hat.size();
  if (mode == Aggregation::SW) {
    double total = 0.0;
    for (const auto& f : fits) total += static_cast<double>(f.n_arm);
    Vector out = Vector::Zero(p);
    for (const auto& f : fits) out += static_cast<double>(f.n_arm) / total * f.theta_hat;
    return out;
  }
  Matrix gram = Matrix::Zero(p, p);
  Vector rhs = Vector::Zero(p);
  for (const auto& f : fits) {
    gram += f.gram;
    rhs += f.gram * f.theta_hat;
  }
  return solve_symmetric(gram, rhs, rank_tolerance);
}

Matrix centered_gram(const ArmView& view) {
  const Eigen::Index d = view.design.cols() - 1;
  const Matrix x = view.design.rightCols(d);
  const Eigen::RowVectorXd mean = x.colwise().mean();
  const Matrix c = x.rowwise() - mean;
  return c.transpose() * c;
}

Vector one_shot_beta(const std::vector<Vector>& betas, const std::vector<std::size_t>& sizes,
                     const std::vector<Matrix>& centered, Aggregation mode, double rank_tolerance) {
  if (betas.empty()) throw Error(ErrorKind::InvalidArgument, "no local slopes");
  const Eigen::Index d = betas.front().size();
  if (mode == Aggregation::SW) {
    if (sizes.size() != betas.size()) throw Error(ErrorKind::Dimension, "one size per slope vector");
    double total = 0.0;
    for (auto n : sizes) total += static_cast<double>(n);
    Vector out = Vector::Zero(d);
    for (std::size_t k = 0; k < betas.size(); ++k) out += static_cast<double>(sizes[k]) / total * betas[k];
    return out;
  }
  if (centered.size() != betas.size()) throw Error(ErrorKind::Dimension, "one weight matrix per slope vector");
  Matrix weight = Matrix::Zero(d, d);
  Vector rhs = Vector::Zero(d);
  for (std::size_t k = 0; k < betas.size(); ++k) {
    weight += centered[k];
    rhs += centered[k] * betas[k];
  }
  return solve_symmetric(weight, rhs, rank_tolerance);
}

namespace {

Vector payload_vector(const Message& m, std::size_t offset, Eigen::Index length) {
  Vector v(length);
  for (Eigen::Index i = 0; i < length; ++i) v(i) = m.payload[offset + static_cast<std::size_t>(i)];
  return v;
}

Matrix payload_matrix(const Message& m, std::size_t offset, Eigen::Index dim) {
  Matrix g(dim, dim);
  for (Eigen::Index i = 0; i < dim; ++i) {
    for (Eigen::Index j = 0; j < dim; ++j) g(i, j) = m.payload[offset + static_cast<std::size_t>(i * dim + j)];
  }
  return g;
}

void append(std::vector<double>& payload, const Vector& v) {
  payload.insert(payload.end(), v.data(), v.data() + v.size());
}

void append(std::vector<double>& payload, const Matrix& g) {
  for (Eigen::Index i = 0; i < g.rows(); ++i) {
    for (Eigen::Index j = 0; j < g.cols(); ++j) payload.push_back(g(i, j));
  }
}

// Second round shared by every one-shot variant: the server broadcasts the
// federated parameters, studies return (tau_k, n_k), the server takes the SW mean.
template <typename LocalTau>
double second_round(const FederatedDataset& fed, CommLedger& ledger, const Vector& global1,
                    const Vector& global0, LocalTau local_tau_fn) {
  ledger.begin_round();
  std::vector<Message> inbox;
  for (std::size_t k = 0; k < fed.K(); ++k) {
    Message down1{MessageKind::GlobalTheta, Direction::Down, k, 1, {}};
    Message down0{MessageKind::GlobalTheta, Direction::Down, k, 0, {}};
    append(down1.payload, global1);
    append(down0.payload, global0);
    ledger.record(down1);
    ledger.record(down0);
    const Vector g1 = payload_vector(down1, 0, global1.size());
    const Vector g0 = payload_vector(down0, 0, global0.size());
    Message up{MessageKind::LocalATE, Direction::Up, k, -1,
               {local_tau_fn(k, g1, g0), static_cast<double>(fed.studies[k].n())}};
    ledger.record(up);
    inbox.push_back(std::move(up));
  }
  std::vector<double> tau, sizes;
  for (const auto& m : inbox) {
    tau.push_back(m.payload[0]);
    sizes.push_back(m.payload[1]);
  }
  return meta_sw(tau, sizes);
}

EstimateReport one_shot_plain(const FederatedDataset& fed, Aggregation mode, double tol) {
  EstimateReport r;
  r.id = {mode == Aggregation::SW ? EstimatorKind::OneShotSW : EstimatorKind::OneShotIVW, 0};
  r.comm = ledger_for(fed);
  const Eigen::Index p = fed.d + 1;

  r.comm.begin_round();
  std::vector<ArmFit> received[2];
  for (std::size_t k = 0; k < fed.K(); ++k) {
    const auto& s = fed.studies[k];
    for (int arm : {1, 0}) {
      const ArmFit fit = fit_arm(split_by_arm(s, arm), tol);
      Message m{MessageKind::LocalTheta, Direction::Up, k, arm, {}};
      append(m.payload, fit.theta_hat);
      if (mode == Aggregation::SW) {
        m.payload.push_back(static_cast<double>(fit.n_arm));
      } else {
        append(m.payload, fit.gram);
      }
      r.comm.record(m);
      // server side: rebuild what it needs from the payload alone
      ArmFit seen;
      seen.theta_hat = payload_vector(m, 0, p);
      if (mode == Aggregation::SW) {
        seen.n_arm = static_cast<std::size_t>(m.payload[static_cast<std::size_t>(p)]);
      } else {
        seen.gram = payload_matrix(m, static_cast<std::size_t>(p), p);
      }
      received[arm].push_back(std::move(seen));
    }
  }
  const Vector theta1 = one_shot_theta(received[1], mode, tol);
  const Vector theta0 = one_shot_theta(received[0], mode, tol);
  r.tau_hat = second_round(fed, r.comm, theta1, theta0, [&](std::size_t k, const Vector& g1, const Vector& g0) {
    return g_formula(g1, g0, full_design(fed.studies[k]));
  });
  return r;
}

EstimateReport one_shot_adjusted(const FederatedDataset& fed, Aggregation mode, double tol) {
  EstimateReport r;
  r.id = {mode == Aggregation::SW ? EstimatorKind::OneShotSWAdj : EstimatorKind::OneShotIVWAdj, 0};
  r.comm = ledger_for(fed);
  const Eigen::Index d = fed.d;
  const std::size_t K = fed.K();

  // local intercepts never leave the study
  std::vector<double> intercept[2];
  std::vector<Vector> betas[2];
  std::vector<std::size_t> sizes[2];
  std::vector<Matrix> weights[2];
  r.comm.begin_round();
  for (std::size_t k = 0; k < K; ++k) {
    const auto& s = fed.studies[k];
    for (int arm : {1, 0}) {
      const ArmView view = split_by_arm(s, arm);
      const ArmFit fit = fit_arm(view, tol);
      intercept[arm].push_back(fit.theta_hat(0));
      Message m{MessageKind::LocalTheta, Direction::Up, k, arm, {}};
      append(m.payload, Vector(fit.theta_hat.tail(d)));
      if (mode == Aggregation::SW) {
        m.payload.push_back(static_cast<double>(fit.n_arm));
      } else {
        append(m.payload, centered_gram(view));
      }
      r.comm.record(m);
      betas[arm].push_back(payload_vector(m, 0, d));
      if (mode == Aggregation::SW) {
        sizes[arm].push_back(static_cast<std::size_t>(m.payload[static_cast<std::size_t>(d)]));
      } else {
        weights[arm].push_back(payload_matrix(m, static_cast<std::size_t>(d), d));
      }
    }
  }
  const Vector beta1 = one_shot_beta(betas[1], sizes[1], weights[1], mode, tol);
  const Vector beta0 = one_shot_beta(betas[0], sizes[0], weights[0], mode, tol);
  r.tau_hat = second_round(fed, r.comm, beta1, beta0, [&](std::size_t k, const Vector& b1, const Vector& b0) {
    const auto& s = fed.studies[k];
    const Eigen::RowVectorXd xbar = s.covariates.colwise().mean();
    return intercept[1][k] - intercept[0][k] + xbar.dot(b1 - b0);
  });
  return r;
}

}  // namespace

EstimateReport one_shot_tau(const FederatedDataset& fed, Aggregation mode, bool adjusted,
                            double rank_tolerance) {
  require_studies(fed);
  return adjusted ? one_shot_adjusted(fed, mode, rank_tolerance) : one_shot_plain(fed, mode, rank_tolerance);
}

EstimateReport gd_tau(const FederatedDataset& fed, const GdOptions& options, bool adjusted,
                      double rank_tolerance) {
  require_studies(fed);
  FederatedDataset augmented;
  if (adjusted) augmented = augment_dummies(fed);
  const FederatedDataset& use = adjusted ? augmented : fed;
  for (int arm : {1, 0}) {
    if (!is_full_column_rank(pooled_arm(use, arm).design, rank_tolerance)) {
      throw Error(ErrorKind::RankDeficient, "federated design of arm " + std::to_string(arm) + " is rank deficient");
    }
  }

  EstimateReport r;
  r.id = {adjusted ? EstimatorKind::GDAdj : EstimatorKind::GD, 0};
  r.comm = CommLedger(fed.K(), options.fedavg.keep_log);
  Vector theta[2];
  for (int arm : {1, 0}) {
    FedAvgConfig cfg = options.fedavg;
    cfg.stream = options.fedavg.stream * 2 + static_cast<std::uint64_t>(arm);
    FedAvgResult fit = run_fedavg(arm_views(use, arm), cfg, arm);
    if (options.require_convergence && !fit.converged) {
      std::ostringstream msg;
      msg << "FedAvg (arm " << arm << ") last step " << fit.last_step << " > tolerance "
          << cfg.convergence_tol << " after " << fit.rounds_run << " rounds";
      throw Error(ErrorKind::NoConvergence, msg.str());
    }
    theta[arm] = fit.theta;
    r.comm.merge_parallel(fit.ledger);
  }
  r.tau_hat = second_round(use, r.comm, theta[1], theta[0], [&](std::size_t k, const Vector& g1, const Vector& g0) {
    return g_formula(g1, g0, full_design(use.studies[k]));
  });
  return r;
}

EstimateReport estimate(const FederatedDataset& fed, const EstimatorId& id, const EstimateOptions& options) {
  const double tol = options.rank_tolerance;
  switch (id.kind) {
    case EstimatorKind::DM: return dm(fed);
    case EstimatorKind::Local: {
      if (id.study < 1 || id.study > fed.K()) throw Error(ErrorKind::Value, "local estimator names an unknown study");
      return local_tau(fed.studies[id.study - 1], tol);
    }
    case EstimatorKind::Pool: return pool_tau(fed, false, tol);
    case EstimatorKind::PoolAdj: return pool_tau(fed, true, tol);
    case EstimatorKind::MetaSW: return meta_tau(fed, Aggregation::SW, tol);
    case EstimatorKind::MetaIVW: return meta_tau(fed, Aggregation::IVW, tol);
    case EstimatorKind::OneShotSW: return one_shot_tau(fed, Aggregation::SW, false, tol);
    case EstimatorKind::OneShotIVW: return one_shot_tau(fed, Aggregation::IVW, false, tol);
    case EstimatorKind::OneShotSWAdj: return one_shot_tau(fed, Aggregation::SW, true, tol);
    case EstimatorKind::OneShotIVWAdj: return one_shot_tau(fed, Aggregation::IVW, true, tol);
    case EstimatorKind::GD: return gd_tau(fed, options.gd, false, tol);
    case EstimatorKind::GDAdj: return gd_tau(fed, options.gd, true, tol);
  }
  throw Error(ErrorKind::InvalidArgument, "unhandled estimator");
}

}  // namespace fedate
