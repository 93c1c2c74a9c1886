#pragma once

#include <stdexcept>
#include <string>

namespace surt {

enum class ErrorKind {
  ShapeMismatch,
  BadLabel,
  OracleTooLarge,
  BadBeam,
  OutOfSchedule,
  NonFiniteGradient,
  NonFiniteObjective,
  NonFiniteLoss,
  GradientMissing,
  BadHop,
  BadPattern,
  BadMatrix,
  BadConfig,
  TooManySimultaneous,
  InfeasibleOverlap,
  TooManyUtterances,
  Io,
};

const char* to_string(ErrorKind kind);

// Domain error carrying a machine-checkable kind.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

}  // namespace surt
