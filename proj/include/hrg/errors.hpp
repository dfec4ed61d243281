#pragma once

#include <stdexcept>
#include <string>

namespace hrg {

/// Error categories used across the library. Invalid input (bad config,
/// violated precondition) maps to exit code 2 at the CLI, numerical
/// failures to exit code 3.
enum class ErrorCode {
  InvalidConfig,
  DivergentSeries,
  NoSuchLevel,
  GridOverflow,
  QuadratureDivergence,
  SupportEscape,
  MeanViolation,
  NotInHighRegion,
  DegenerateDensity,
  NoConvergence,
  NegativeDensity,
  FitWindowTooNarrow,
  TiltOverflow,
  BracketInvalid,
  InsufficientPoints,
  AutotuneFailed,
  Internal,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}
  ErrorCode code() const { return code_; }

  /// True for errors caused by bad input rather than numerics.
  bool is_invalid_input() const {
    return code_ == ErrorCode::InvalidConfig || code_ == ErrorCode::NoSuchLevel ||
           code_ == ErrorCode::BracketInvalid ||
           code_ == ErrorCode::InsufficientPoints;
  }

 private:
  ErrorCode code_;
};

const char* error_code_name(ErrorCode code);

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) {
  throw Error(code, what);
}

}  // namespace hrg
