#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace coast {

/// Failure categories surfaced by the library. The CLI maps these onto exit
/// codes (see `exit_code_for`).
enum class ErrorCode {
  DimensionMismatch,
  NotUnitNorm,
  DegenerateBudget,
  InfeasibleBasePoint,
  ZeroTangent,
  ParallelInput,
  NotSymmetric,
  NotPsd,
  ZeroMatrix,
  NonPositiveEpsilon,
  NegativeWeight,
  NonUnitFeature,
  NonFiniteIterate,
  NoRootFound,
  IllConditioned,
  UnsupportedDimension,
  ZeroResult,
  NonOrthogonalBasis,
  ZeroRow,
  DegenerateDirection,
  ZeroActivation,
  MissingLocation,
  InvalidArgument,
  Format,
  Io,
};

std::string_view to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string &message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message),
        code_(code), detail_(message) {}

  ErrorCode code() const noexcept { return code_; }
  const std::string &detail() const noexcept { return detail_; }

  /// Same error with `context` prepended to the detail message.
  Error with_context(const std::string &context) const {
    return Error(code_, context + ": " + detail_);
  }

 private:
  ErrorCode code_;
  std::string detail_;
};

/// 2 for input/format problems, 3 for numerical rejection, 4 for non-finite
/// iterates.
int exit_code_for(ErrorCode code);

}  // namespace coast
