#pragma once

#include <stdexcept>
#include <string>

namespace pnikit {

/// Error categories surfaced to callers and, via the CLI, as machine-readable
/// error records.
enum class ErrorCode {
  invalid_argument,   // caller violated a precondition
  invalid_format,     // file exists but does not match its declared schema
  out_of_bounds,      // region/window outside image or mask bounds
  io_error,           // filesystem or codec failure
  inconsistent_input, // inputs individually valid but mutually contradictory
  degenerate_input,   // statistic undefined on this data
  not_found,          // referenced entity missing
};

inline const char* to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::invalid_argument: return "invalid_argument";
    case ErrorCode::invalid_format: return "invalid_format";
    case ErrorCode::out_of_bounds: return "out_of_bounds";
    case ErrorCode::io_error: return "io_error";
    case ErrorCode::inconsistent_input: return "inconsistent_input";
    case ErrorCode::degenerate_input: return "degenerate_input";
    case ErrorCode::not_found: return "not_found";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace pnikit
