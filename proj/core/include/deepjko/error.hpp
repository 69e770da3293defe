#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace deepjko {

enum class ErrorCode {
  ShapeMismatch,
  NonFinite,
  TapeConsumed,
  InvalidArgument,
  Domain,
  Io,
  Config,
  Format,
  Divergence,
  SingularCovariance,
  MissingCheckpoint,
};

std::string_view to_string(ErrorCode code) noexcept;

// Every failure in the library surfaces as one of these. The CLI prints
// `error[<code>]: <message>` on a single line.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace deepjko
