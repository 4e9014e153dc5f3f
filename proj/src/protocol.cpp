#include "fedate/protocol.hpp"

namespace fedate {

EstimateReport run_protocol(const FederatedDataset& fed, const EstimatorId& id,
                            const EstimateOptions& options) {
  EstimateOptions logged = options;
  logged.gd.fedavg.keep_log = true;
  return estimate(fed, id, logged);
}

ExpectedComm expected_comm(EstimatorKind kind, std::size_t d, std::size_t K, std::size_t fedavg_rounds,
                           bool auto_eta) {
  ExpectedComm e;
  const std::size_t p = d + 1;
  switch (kind) {
    case EstimatorKind::Local:
    case EstimatorKind::Pool:
    case EstimatorKind::PoolAdj:
      return e;
    case EstimatorKind::DM:
      // (sum y, count) per arm
      e.rounds = 1;
      e.floats_up = 4;
      return e;
    case EstimatorKind::MetaSW:
    case EstimatorKind::MetaIVW:
      // (tau_k, n_k) or (tau_k, V_k)
      e.rounds = 1;
      e.floats_up = 2;
      return e;
    case EstimatorKind::OneShotSW:
      // round 1: (theta, n_kw) per arm; round 2: theta down per arm, (tau_k, n_k) up
      e.rounds = 2;
      e.floats_up = 2 * (p + 1) + 2;
      e.floats_down = 2 * p;
      return e;
    case EstimatorKind::OneShotIVW:
      e.rounds = 2;
      e.floats_up = 2 * (p + p * p) + 2;
      e.floats_down = 2 * p;
      return e;
    case EstimatorKind::OneShotSWAdj:
      e.rounds = 2;
      e.floats_up = 2 * (d + 1) + 2;
      e.floats_down = 2 * d;
      return e;
    case EstimatorKind::OneShotIVWAdj:
      e.rounds = 2;
      e.floats_up = 2 * (d + d * d) + 2;
      e.floats_down = 2 * d;
      return e;
    case EstimatorKind::GD:
    case EstimatorKind::GDAdj: {
      const std::size_t w = kind == EstimatorKind::GD ? p : d + K;
      const std::size_t R = fedavg_rounds;
      // per arm: R model exchanges; the arm size rides on the first upload
      // (LocalModel, or LocalEigen with lambda when eta is auto) and eta on the
      // first broadcast. Final round: both thetas down, (tau_k, n_k) up.
      if (auto_eta) {
        e.rounds = R + 2;
        e.floats_up = 2 * (2 + R * w) + 2;
        e.floats_down = 2 * (R * w + 1) + 2 * w;
      } else {
        e.rounds = R + 1;
        e.floats_up = 2 * (R * w + 1) + 2;
        e.floats_down = 2 * R * w + 2 * w;
      }
      return e;
    }
  }
  return e;
}

bool ledger_carries_only_aggregates(const CommLedger& ledger) {
  for (const auto& entry : ledger.log()) {
    switch (entry.kind) {
      case MessageKind::LocalATE:
      case MessageKind::LocalTheta:
      case MessageKind::GlobalTheta:
      case MessageKind::LocalModel:
      case MessageKind::LocalEigen:
        break;
      default:
        return false;
    }
  }
  return true;
}

}  // namespace fedate
