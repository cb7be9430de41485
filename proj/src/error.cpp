#include "meel/error.hpp"

namespace meel {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kDegenerateInput: return "degenerate_input";
    case ErrorCode::kDimensionMismatch: return "dimension_mismatch";
    case ErrorCode::kOutOfRange: return "out_of_range";
    case ErrorCode::kInvalidArgument: return "invalid_argument";
    case ErrorCode::kFormat: return "format";
    case ErrorCode::kTruncated: return "truncated";
    case ErrorCode::kIo: return "io";
    case ErrorCode::kValidation: return "validation";
    case ErrorCode::kConfig: return "config";
  }
  return "unknown";
}

}  // namespace meel
