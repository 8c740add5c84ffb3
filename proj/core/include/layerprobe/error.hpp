#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace layerprobe {

enum class ErrorCode {
  Io,
  BadMagic,
  UnsupportedVersion,
  Truncated,
  InvariantViolation,
  OutOfRange,
  EmptySpan,
  ShapeMismatch,
  InvalidArgument,
  InsufficientTokens,
  InfeasibleSpec,
  TrainingDiverged,
  DegenerateRdm,
  SingleClassSplit,
  TaskNotFound,
  StoreNotFound,
};

// Every failure raised by the library carries a machine-readable code; the CLI
// reports it verbatim in its error JSON.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::Io: return "Io";
    case ErrorCode::BadMagic: return "BadMagic";
    case ErrorCode::UnsupportedVersion: return "UnsupportedVersion";
    case ErrorCode::Truncated: return "Truncated";
    case ErrorCode::InvariantViolation: return "InvariantViolation";
    case ErrorCode::OutOfRange: return "OutOfRange";
    case ErrorCode::EmptySpan: return "EmptySpan";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::InsufficientTokens: return "InsufficientTokens";
    case ErrorCode::InfeasibleSpec: return "InfeasibleSpec";
    case ErrorCode::TrainingDiverged: return "TrainingDiverged";
    case ErrorCode::DegenerateRdm: return "DegenerateRdm";
    case ErrorCode::SingleClassSplit: return "SingleClassSplit";
    case ErrorCode::TaskNotFound: return "TaskNotFound";
    case ErrorCode::StoreNotFound: return "StoreNotFound";
  }
  return "Unknown";
}

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) {
  throw Error(code, what);
}

}  // namespace layerprobe
