#include "coast/error.hpp"

namespace coast {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::NotUnitNorm: return "NotUnitNorm";
    case ErrorCode::DegenerateBudget: return "DegenerateBudget";
    case ErrorCode::InfeasibleBasePoint: return "InfeasibleBasePoint";
    case ErrorCode::ZeroTangent: return "ZeroTangent";
    case ErrorCode::ParallelInput: return "ParallelInput";
    case ErrorCode::NotSymmetric: return "NotSymmetric";
    case ErrorCode::NotPsd: return "NotPsd";
    case ErrorCode::ZeroMatrix: return "ZeroMatrix";
    case ErrorCode::NonPositiveEpsilon: return "NonPositiveEpsilon";
    case ErrorCode::NegativeWeight: return "NegativeWeight";
    case ErrorCode::NonUnitFeature: return "NonUnitFeature";
    case ErrorCode::NonFiniteIterate: return "NonFiniteIterate";
    case ErrorCode::NoRootFound: return "NoRootFound";
    case ErrorCode::IllConditioned: return "IllConditioned";
    case ErrorCode::UnsupportedDimension: return "UnsupportedDimension";
    case ErrorCode::ZeroResult: return "ZeroResult";
    case ErrorCode::NonOrthogonalBasis: return "NonOrthogonalBasis";
    case ErrorCode::ZeroRow: return "ZeroRow";
    case ErrorCode::DegenerateDirection: return "DegenerateDirection";
    case ErrorCode::ZeroActivation: return "ZeroActivation";
    case ErrorCode::MissingLocation: return "MissingLocation";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::Format: return "Format";
    case ErrorCode::Io: return "Io";
  }
  return "Unknown";
}

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::Format:
    case ErrorCode::Io:
    case ErrorCode::InvalidArgument:
    case ErrorCode::DimensionMismatch:
    case ErrorCode::MissingLocation:
      return 2;
    case ErrorCode::NonFiniteIterate:
      return 4;
    default:
      return 3;
  }
}

}  // namespace coast
