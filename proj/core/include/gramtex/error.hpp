#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace gramtex {

enum class ErrorCode {
  DimensionMismatch,
  InvalidArgument,
  UnknownLayer,
  ImageTooSmall,
  BadMagic,
  Truncated,
  SpecMismatch,
  NonFinite,
  Io,
  Parse,
};

std::string_view to_string(ErrorCode code);

/// Error thrown by every gramtex operation. The code lets callers (and the
/// CLI exit-code mapping) distinguish failure classes without parsing text.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace gramtex
