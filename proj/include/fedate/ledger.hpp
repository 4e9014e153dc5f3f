#pragma once

#include <cstddef>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace fedate {

enum class MessageKind { LocalATE, LocalTheta, GlobalTheta, LocalModel, LocalEigen };
enum class Direction { Up, Down };

std::string_view to_string(MessageKind kind);
std::string_view to_string(Direction direction);

// A message between one study and the server. Only aggregates travel: the
// payload is a flat list of floats, never raw rows.
struct Message {
  MessageKind kind = MessageKind::LocalATE;
  Direction direction = Direction::Up;
  std::size_t study = 0;  // 0-based position in study order
  int arm = -1;           // -1 when the payload is not arm-specific
  std::vector<double> payload;

  std::size_t payload_floats() const { return payload.size(); }
};

struct LogEntry {
  std::size_t round;
  Direction direction;
  std::size_t study;
  MessageKind kind;
  int arm;
  std::size_t floats;
};

// Rounds and float counts per study. Totals are kept even when the detailed log
// is switched off (long FedAvg runs inside Monte Carlo loops).
class CommLedger {
 public:
  CommLedger() = default;
  explicit CommLedger(std::size_t studies, bool keep_log = true);

  std::size_t studies() const { return up_.size(); }
  std::size_t rounds() const { return rounds_; }
  bool keeps_log() const { return keep_log_; }

  // Opens a new round and returns its 1-based index.
  std::size_t begin_round();
  // Opens `count` rounds at once; later charges land in the last one. For bulk
  // accounting when no log is kept.
  std::size_t begin_rounds(std::size_t count);
  // Charges the message to the current round.
  void record(const Message& message);
  // Same accounting from the message shape alone, for hot loops that do not
  // materialize payloads.
  void charge(MessageKind kind, Direction direction, std::size_t study, int arm, std::size_t floats);

  std::size_t floats_up(std::size_t study) const { return up_.at(study); }
  std::size_t floats_down(std::size_t study) const { return down_.at(study); }
  const std::vector<std::size_t>& floats_up_per_study() const { return up_; }
  const std::vector<std::size_t>& floats_down_per_study() const { return down_; }
  std::size_t total_floats() const;
  const std::vector<LogEntry>& log() const { return log_; }

  // Appends `other`, whose rounds run alongside this ledger's rounds starting at
  // round 1 (e.g. the two arms of a FedAvg fit). The round count becomes the max.
  void merge_parallel(const CommLedger& other);

  nlohmann::json to_json() const;

 private:
  std::size_t rounds_ = 0;
  bool keep_log_ = true;
  std::vector<std::size_t> up_;
  std::vector<std::size_t> down_;
  std::vector<LogEntry> log_;
};

}  // namespace fedate
