#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace fedate {

enum class ErrorKind {
  InvalidArgument,
  RankDeficient,
  NoConvergence,
  Divergence,
  NotPositiveDefinite,
  EmptyArm,
  DegenerateArm,
  ZeroVariance,
  SingleStudy,
  Dimension,
  FormulaInvalid,
  Parse,
  Schema,
  Value,
  Io,
};

std::string_view to_string(ErrorKind kind);

// Numerical failures (exit code 3 in the CLI) as opposed to bad input (exit code 2).
bool is_numerical(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace fedate
