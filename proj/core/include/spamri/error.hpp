#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace spamri {

enum class ErrorCode {
  MalformedStack,
  DegenerateInput,
  InvalidParams,
  InvalidParameter,
  InfeasibleMask,
  ShapeMismatch,
  IndexOutOfRange,
  DegenerateDivision,
  EmptyDataset,
  UnsupportedDenoiser,
  InfeasibleSchedule,
  Divergence,
  Io,
  Format,
};

std::string_view to_string(ErrorCode code);

/// Base exception for every failure raised by the library. The code lets
/// callers (the CLI in particular) map failures to exit statuses without
/// parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace spamri
