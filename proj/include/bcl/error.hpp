#pragma once

#include <stdexcept>
#include <string>

namespace bcl {

enum class ErrorCode {
  near_zero_norm = 10,
  empty_input,
  non_positive_alpha,
  dimension_mismatch,
  precondition_violated,
  unbalanced_classes,
  singleton_class,
  k_too_large,
  config_invalid,
  io_failure,
};

inline const char* error_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::near_zero_norm: return "NearZeroNorm";
    case ErrorCode::empty_input: return "EmptyInput";
    case ErrorCode::non_positive_alpha: return "NonPositiveAlpha";
    case ErrorCode::dimension_mismatch: return "DimensionMismatch";
    case ErrorCode::precondition_violated: return "PreconditionViolated";
    case ErrorCode::unbalanced_classes: return "UnbalancedClasses";
    case ErrorCode::singleton_class: return "SingletonClass";
    case ErrorCode::k_too_large: return "KTooLarge";
    case ErrorCode::config_invalid: return "ConfigInvalid";
    case ErrorCode::io_failure: return "IoFailure";
  }
  return "Unknown";
}

// All library failures carry a code; the CLI maps it to a distinct exit status.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(error_name(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace bcl
