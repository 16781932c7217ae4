#include "gramtex/error.hpp"

namespace gramtex {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::DimensionMismatch: return "dimension mismatch";
    case ErrorCode::InvalidArgument: return "invalid argument";
    case ErrorCode::UnknownLayer: return "unknown layer";
    case ErrorCode::ImageTooSmall: return "image too small";
    case ErrorCode::BadMagic: return "bad magic";
    case ErrorCode::Truncated: return "truncated file";
    case ErrorCode::SpecMismatch: return "spec mismatch";
    case ErrorCode::NonFinite: return "non-finite value";
    case ErrorCode::Io: return "i/o error";
    case ErrorCode::Parse: return "parse error";
  }
  return "error";
}

}  // namespace gramtex
