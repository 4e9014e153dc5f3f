#include "fedate/ledger.hpp"

#include <algorithm>
#include <numeric>

#include "fedate/error.hpp"

namespace fedate {

std::string_view to_string(MessageKind kind) {
  switch (kind) {
    case MessageKind::LocalATE: return "LocalATE";
    case MessageKind::LocalTheta: return "LocalTheta";
    case MessageKind::GlobalTheta: return "GlobalTheta";
    case MessageKind::LocalModel: return "LocalModel";
    case MessageKind::LocalEigen: return "LocalEigen";
  }
  return "Unknown";
}

std::string_view to_string(Direction direction) {
  return direction == Direction::Up ? "up" : "down";
}

CommLedger::CommLedger(std::size_t studies, bool keep_log)
    : keep_log_(keep_log), up_(studies, 0), down_(studies, 0) {}

std::size_t CommLedger::begin_round() { return ++rounds_; }

std::size_t CommLedger::begin_rounds(std::size_t count) {
  if (keep_log_) throw Error(ErrorKind::InvalidArgument, "bulk rounds need a ledger without a log");
  rounds_ += count;
  return rounds_;
}

void CommLedger::record(const Message& message) {
  charge(message.kind, message.direction, message.study, message.arm, message.payload_floats());
}

void CommLedger::charge(MessageKind kind, Direction direction, std::size_t study, int arm,
                        std::size_t floats) {
  if (rounds_ == 0) throw Error(ErrorKind::InvalidArgument, "message recorded before any round began");
  if (study >= up_.size()) throw Error(ErrorKind::InvalidArgument, "message for unknown study");
  auto& tally = direction == Direction::Up ? up_ : down_;
  tally[study] += floats;
  if (keep_log_) log_.push_back({rounds_, direction, study, kind, arm, floats});
}

std::size_t CommLedger::total_floats() const {
  return std::accumulate(up_.begin(), up_.end(), std::size_t{0}) +
         std::accumulate(down_.begin(), down_.end(), std::size_t{0});
}

void CommLedger::merge_parallel(const CommLedger& other) {
  if (other.up_.size() != up_.size()) throw Error(ErrorKind::InvalidArgument, "ledgers cover different studies");
  for (std::size_t k = 0; k < up_.size(); ++k) {
    up_[k] += other.up_[k];
    down_[k] += other.down_[k];
  }
  rounds_ = std::max(rounds_, other.rounds_);
  if (keep_log_) {
    log_.insert(log_.end(), other.log_.begin(), other.log_.end());
    std::stable_sort(log_.begin(), log_.end(),
                     [](const LogEntry& a, const LogEntry& b) { return a.round < b.round; });
  }
}

nlohmann::json CommLedger::to_json() const {
  nlohmann::json j;
  j["rounds"] = rounds_;
  j["floats_up_per_study"] = up_;
  j["floats_down_per_study"] = down_;
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& e : log_) {
    nlohmann::json item = {{"round", e.round},
                           {"direction", std::string(to_string(e.direction))},
                           {"study", e.study + 1},
                           {"kind", std::string(to_string(e.kind))},
                           {"floats", e.floats}};
    if (e.arm >= 0) item["arm"] = e.arm;
    entries.push_back(item);
  }
  j["log"] = entries;
  return j;
}

}  // namespace fedate
