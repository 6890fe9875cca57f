#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace seeco {

enum class ErrorCode {
  kInvalidTemperature,
  kEmptyInput,
  kShapeMismatch,
  kNonFiniteValue,
  kStaleGraph,
  kStateUninitialized,
  kConfigError,
  kEmptyCategory,
  kNonSquareInput,
  kUnsupportedViewCount,
  kMissingCategory,
  kInconsistentSynonymCount,
  kFormatError,
  kWindowTooLarge,
  kAdaptationDiverged,
  kIoError,
  kInvariantViolation,
};

inline std::string_view error_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidTemperature: return "InvalidTemperature";
    case ErrorCode::kEmptyInput: return "EmptyInput";
    case ErrorCode::kShapeMismatch: return "ShapeMismatch";
    case ErrorCode::kNonFiniteValue: return "NonFiniteValue";
    case ErrorCode::kStaleGraph: return "StaleGraph";
    case ErrorCode::kStateUninitialized: return "StateUninitialized";
    case ErrorCode::kConfigError: return "ConfigError";
    case ErrorCode::kEmptyCategory: return "EmptyCategory";
    case ErrorCode::kNonSquareInput: return "NonSquareInput";
    case ErrorCode::kUnsupportedViewCount: return "UnsupportedViewCount";
    case ErrorCode::kMissingCategory: return "MissingCategory";
    case ErrorCode::kInconsistentSynonymCount: return "InconsistentSynonymCount";
    case ErrorCode::kFormatError: return "FormatError";
    case ErrorCode::kWindowTooLarge: return "WindowTooLarge";
    case ErrorCode::kAdaptationDiverged: return "AdaptationDiverged";
    case ErrorCode::kIoError: return "IoError";
    case ErrorCode::kInvariantViolation: return "InvariantViolation";
  }
  return "Unknown";
}

/// Every failure raised by the library carries one of the codes above so
/// callers (notably the CLI) can map it to an exit status.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(error_name(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

inline void require(bool cond, ErrorCode code, const std::string& what) {
  if (!cond) fail(code, what);
}

}  // namespace seeco
