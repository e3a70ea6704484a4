#include "fcmtm/error.hpp"

namespace fcmtm {

ErrorCategory category_of(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::io_failure:
      return ErrorCategory::io;
    case ErrorCode::malformed_header:
    case ErrorCode::unsupported_format:
    case ErrorCode::unsupported_orientation:
    case ErrorCode::truncated_data:
    case ErrorCode::grayscale_pfm:
    case ErrorCode::nan_payload:
    case ErrorCode::invalid_pixel:
    case ErrorCode::bad_magic:
    case ErrorCode::version_mismatch:
    case ErrorCode::checksum_mismatch:
    case ErrorCode::layer_mismatch:
    case ErrorCode::manifest_mismatch:
    case ErrorCode::degenerate_input:
      return ErrorCategory::format;
    case ErrorCode::invalid_argument:
    case ErrorCode::shape_mismatch:
      return ErrorCategory::config;
    case ErrorCode::divergence:
      return ErrorCategory::divergence;
  }
  return ErrorCategory::config;
}

std::string_view to_string(ErrorCategory category) noexcept {
  switch (category) {
    case ErrorCategory::io: return "io";
    case ErrorCategory::format: return "format";
    case ErrorCategory::config: return "config";
    case ErrorCategory::divergence: return "divergence";
  }
  return "unknown";
}

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::io_failure: return "io_failure";
    case ErrorCode::malformed_header: return "malformed_header";
    case ErrorCode::unsupported_format: return "unsupported_format";
    case ErrorCode::unsupported_orientation: return "unsupported_orientation";
    case ErrorCode::truncated_data: return "truncated_data";
    case ErrorCode::grayscale_pfm: return "grayscale_pfm";
    case ErrorCode::nan_payload: return "nan_payload";
    case ErrorCode::invalid_pixel: return "invalid_pixel";
    case ErrorCode::bad_magic: return "bad_magic";
    case ErrorCode::version_mismatch: return "version_mismatch";
    case ErrorCode::checksum_mismatch: return "checksum_mismatch";
    case ErrorCode::layer_mismatch: return "layer_mismatch";
    case ErrorCode::manifest_mismatch: return "manifest_mismatch";
    case ErrorCode::degenerate_input: return "degenerate_input";
    case ErrorCode::invalid_argument: return "invalid_argument";
    case ErrorCode::shape_mismatch: return "shape_mismatch";
    case ErrorCode::divergence: return "divergence";
  }
  return "unknown";
}

}  // namespace fcmtm
