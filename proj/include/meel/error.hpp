#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace meel {

enum class ErrorCode {
  kDegenerateInput,
  kDimensionMismatch,
  kOutOfRange,
  kInvalidArgument,
  kFormat,
  kTruncated,
  kIo,
  kValidation,
  kConfig,
};

std::string_view to_string(ErrorCode code);

// Every failure in the library surfaces as an Error carrying a code, so the
// CLI can map it to an exit status without string matching.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace meel
