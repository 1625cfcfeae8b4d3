#include "lmnet/error.hpp"

namespace lmnet {

const char* to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::InvalidArgument: return "invalid-argument";
    case ErrorKind::ShapeMismatch: return "shape-mismatch";
    case ErrorKind::Corruption: return "corruption";
    case ErrorKind::Format: return "format";
    case ErrorKind::Version: return "version";
    case ErrorKind::Truncated: return "truncated";
    case ErrorKind::Parse: return "parse";
    case ErrorKind::Calib: return "calib";
    case ErrorKind::Io: return "io";
    case ErrorKind::Divergence: return "divergence";
    case ErrorKind::DegenerateScene: return "degenerate-scene";
    case ErrorKind::Capacity: return "capacity";
    case ErrorKind::UndefinedAngle: return "undefined-angle";
    case ErrorKind::Usage: return "usage";
  }
  return "unknown";
}

int exit_code(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::Usage:
      return kExitUsage;
    case ErrorKind::Io:
      return kExitIo;
    case ErrorKind::ShapeMismatch:
    case ErrorKind::Corruption:
    case ErrorKind::Format:
    case ErrorKind::Version:
    case ErrorKind::Truncated:
    case ErrorKind::Parse:
    case ErrorKind::Calib:
      return kExitFormat;
    case ErrorKind::Divergence:
      return kExitDivergence;
    case ErrorKind::DegenerateScene:
    case ErrorKind::Capacity:
    case ErrorKind::UndefinedAngle:
    case ErrorKind::InvalidArgument:
      return kExitData;
  }
  return kExitFailure;
}

}  // namespace lmnet
