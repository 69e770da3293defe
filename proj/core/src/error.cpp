#include "deepjko/error.hpp"

namespace deepjko {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::ShapeMismatch: return "shape";
    case ErrorCode::NonFinite: return "non-finite";
    case ErrorCode::TapeConsumed: return "tape-consumed";
    case ErrorCode::InvalidArgument: return "invalid-argument";
    case ErrorCode::Domain: return "domain";
    case ErrorCode::Io: return "io";
    case ErrorCode::Config: return "config";
    case ErrorCode::Format: return "format";
    case ErrorCode::Divergence: return "divergence";
    case ErrorCode::SingularCovariance: return "singular-covariance";
    case ErrorCode::MissingCheckpoint: return "missing-checkpoint";
  }
  return "unknown";
}

}  // namespace deepjko
