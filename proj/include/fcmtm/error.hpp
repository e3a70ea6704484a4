#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace fcmtm {

/// Coarse failure class, surfaced by the CLI as the message prefix.
enum class ErrorCategory { io, format, config, divergence };

/// Specific failure reasons. Each maps to exactly one category.
enum class ErrorCode {
  io_failure,
  // image codecs
  malformed_header,
  unsupported_format,
  unsupported_orientation,
  truncated_data,
  grayscale_pfm,
  nan_payload,
  invalid_pixel,
  // weight container
  bad_magic,
  version_mismatch,
  checksum_mismatch,
  layer_mismatch,
  manifest_mismatch,
  // numerical / contract
  degenerate_input,
  invalid_argument,
  shape_mismatch,
  divergence,
};

ErrorCategory category_of(ErrorCode code) noexcept;
std::string_view to_string(ErrorCategory category) noexcept;
std::string_view to_string(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }
  ErrorCategory category() const noexcept { return category_of(code_); }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

inline void require(bool condition, ErrorCode code, const char* message) {
  if (!condition) throw Error(code, message);
}

}  // namespace fcmtm
