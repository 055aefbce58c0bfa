#include "spamri/error.hpp"

namespace spamri {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::MalformedStack: return "malformed-stack";
    case ErrorCode::DegenerateInput: return "degenerate-input";
    case ErrorCode::InvalidParams: return "invalid-params";
    case ErrorCode::InvalidParameter: return "invalid-parameter";
    case ErrorCode::InfeasibleMask: return "infeasible-mask";
    case ErrorCode::ShapeMismatch: return "shape-mismatch";
    case ErrorCode::IndexOutOfRange: return "index-out-of-range";
    case ErrorCode::DegenerateDivision: return "division-degenerate";
    case ErrorCode::EmptyDataset: return "empty-dataset";
    case ErrorCode::UnsupportedDenoiser: return "unsupported-denoiser";
    case ErrorCode::InfeasibleSchedule: return "infeasible-schedule";
    case ErrorCode::Divergence: return "divergence";
    case ErrorCode::Io: return "io";
    case ErrorCode::Format: return "format";
  }
  return "unknown";
}

}  // namespace spamri
