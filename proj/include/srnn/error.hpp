#pragma once

#include <stdexcept>
#include <string>

namespace srnn {

// Failure category carried by every exception thrown from this library.
// The CLI maps config/invalid_argument to exit code 1 (caller mistake) and
// everything else to exit code 2 (bad data or runtime failure).
enum class ErrorCode {
  invalid_argument,
  config,
  dimension_mismatch,
  corrupt_format,
  timestamp_parse,
  io,
  infeasible,
  album_too_short,
  numeric,
  internal,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

inline void require(bool condition, ErrorCode code, const std::string& message) {
  if (!condition) throw Error(code, message);
}

inline const char* error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::invalid_argument: return "invalid_argument";
    case ErrorCode::config: return "config";
    case ErrorCode::dimension_mismatch: return "dimension_mismatch";
    case ErrorCode::corrupt_format: return "corrupt_format";
    case ErrorCode::timestamp_parse: return "timestamp_parse";
    case ErrorCode::io: return "io";
    case ErrorCode::infeasible: return "infeasible";
    case ErrorCode::album_too_short: return "album_too_short";
    case ErrorCode::numeric: return "numeric";
    case ErrorCode::internal: return "internal";
  }
  return "unknown";
}

}  // namespace srnn
