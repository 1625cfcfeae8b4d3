#pragma once

#include <stdexcept>
#include <string>

namespace lmnet {

/// Failure categories. Each maps onto one CLI exit code (see exit_code()).
enum class ErrorKind {
  InvalidArgument,
  ShapeMismatch,
  Corruption,
  Format,
  Version,
  Truncated,
  Parse,
  Calib,
  Io,
  Divergence,
  DegenerateScene,
  Capacity,
  UndefinedAngle,
  Usage,
};

const char* to_string(ErrorKind kind) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) {
  throw Error(kind, what);
}

// Process exit codes used by the command-line tool.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitIo = 3;
inline constexpr int kExitFormat = 4;
inline constexpr int kExitDivergence = 5;
inline constexpr int kExitData = 6;

int exit_code(ErrorKind kind) noexcept;

}  // namespace lmnet
