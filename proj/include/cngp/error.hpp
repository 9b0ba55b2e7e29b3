#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace cngp {

enum class ErrorCode {
  invalid_hyperparameter,
  domain_violation,
  out_of_range,
  probe_out_of_range,
  stale_trace,
  shape_mismatch,
  non_finite_loss,
  unbaked_model,
  bad_magic,
  version_mismatch,
  truncated_file,
  invariant_violation,
  target_too_small,
  dimension_mismatch,
  io_error,
  unsupported_format,
  invalid_argument,
};

constexpr std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::invalid_hyperparameter: return "invalid-hyperparameter";
    case ErrorCode::domain_violation: return "domain-violation";
    case ErrorCode::out_of_range: return "out-of-range";
    case ErrorCode::probe_out_of_range: return "probe-out-of-range";
    case ErrorCode::stale_trace: return "stale-trace";
    case ErrorCode::shape_mismatch: return "shape-mismatch";
    case ErrorCode::non_finite_loss: return "non-finite-loss";
    case ErrorCode::unbaked_model: return "unbaked-model";
    case ErrorCode::bad_magic: return "bad-magic";
    case ErrorCode::version_mismatch: return "version-mismatch";
    case ErrorCode::truncated_file: return "truncated-file";
    case ErrorCode::invariant_violation: return "invariant-violation";
    case ErrorCode::target_too_small: return "target-too-small";
    case ErrorCode::dimension_mismatch: return "dimension-mismatch";
    case ErrorCode::io_error: return "io-error";
    case ErrorCode::unsupported_format: return "unsupported-format";
    case ErrorCode::invalid_argument: return "invalid-argument";
  }
  return "unknown";
}

/// Every failure raised by the library carries one of the codes above.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

inline void require(bool condition, ErrorCode code, const std::string& message) {
  if (!condition) fail(code, message);
}

}  // namespace cngp
