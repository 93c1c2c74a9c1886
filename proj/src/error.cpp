#include "surt/error.hpp"

namespace surt {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::BadLabel: return "BadLabel";
    case ErrorKind::OracleTooLarge: return "OracleTooLarge";
    case ErrorKind::BadBeam: return "BadBeam";
    case ErrorKind::OutOfSchedule: return "OutOfSchedule";
    case ErrorKind::NonFiniteGradient: return "NonFiniteGradient";
    case ErrorKind::NonFiniteObjective: return "NonFiniteObjective";
    case ErrorKind::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorKind::GradientMissing: return "GradientMissing";
    case ErrorKind::BadHop: return "BadHop";
    case ErrorKind::BadPattern: return "BadPattern";
    case ErrorKind::BadMatrix: return "BadMatrix";
    case ErrorKind::BadConfig: return "BadConfig";
    case ErrorKind::TooManySimultaneous: return "TooManySimultaneous";
    case ErrorKind::InfeasibleOverlap: return "InfeasibleOverlap";
    case ErrorKind::TooManyUtterances: return "TooManyUtterances";
    case ErrorKind::Io: return "Io";
  }
  return "Unknown";
}

}  // namespace surt
