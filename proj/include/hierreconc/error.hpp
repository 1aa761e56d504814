#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace hierreconc {

/// Failure categories raised by the library. The names are stable and appear
/// verbatim in CLI error lines.
enum class ErrorCode {
  kEmptyMatrix,
  kAllZeroRow,
  kNegativeEntry,
  kLabelCountMismatch,
  kDimensionMismatch,
  kInvalidParameter,
  kFactorizationFailure,
  kSingularQ,
  kNumericalBreakdown,
  kCorrelatedBlocks,
  kMultipleUppers,
  kDegenerateWeights,
  kAllWeightsZero,
  kMultipleUppersUnsupported,
  kContinuousUnsupported,
  kDependentBlocks,
  kEmptySamples,
  kZeroNormalizer,
  kSupportExplosion,
  kZeroCoherence,
  kInsufficientSamples,
  kInvertedInterval,
  kNegativeMetric,
  kNonFiniteUpdate,
  kAllZeroSeries,
  kParseError,
};

constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kEmptyMatrix: return "EmptyMatrix";
    case ErrorCode::kAllZeroRow: return "AllZeroRow";
    case ErrorCode::kNegativeEntry: return "NegativeEntry";
    case ErrorCode::kLabelCountMismatch: return "LabelCountMismatch";
    case ErrorCode::kDimensionMismatch: return "DimensionMismatch";
    case ErrorCode::kInvalidParameter: return "InvalidParameter";
    case ErrorCode::kFactorizationFailure: return "FactorizationFailure";
    case ErrorCode::kSingularQ: return "SingularQ";
    case ErrorCode::kNumericalBreakdown: return "NumericalBreakdown";
    case ErrorCode::kCorrelatedBlocks: return "CorrelatedBlocks";
    case ErrorCode::kMultipleUppers: return "MultipleUppers";
    case ErrorCode::kDegenerateWeights: return "DegenerateWeights";
    case ErrorCode::kAllWeightsZero: return "AllWeightsZero";
    case ErrorCode::kMultipleUppersUnsupported: return "MultipleUppersUnsupported";
    case ErrorCode::kContinuousUnsupported: return "ContinuousUnsupported";
    case ErrorCode::kDependentBlocks: return "DependentBlocks";
    case ErrorCode::kEmptySamples: return "EmptySamples";
    case ErrorCode::kZeroNormalizer: return "ZeroNormalizer";
    case ErrorCode::kSupportExplosion: return "SupportExplosion";
    case ErrorCode::kZeroCoherence: return "ZeroCoherence";
    case ErrorCode::kInsufficientSamples: return "InsufficientSamples";
    case ErrorCode::kInvertedInterval: return "InvertedInterval";
    case ErrorCode::kNegativeMetric: return "NegativeMetric";
    case ErrorCode::kNonFiniteUpdate: return "NonFiniteUpdate";
    case ErrorCode::kAllZeroSeries: return "AllZeroSeries";
    case ErrorCode::kParseError: return "ParseError";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  [[nodiscard]] ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

namespace detail {

inline void require(bool condition, ErrorCode code, const std::string& what) {
  if (!condition) {
    throw Error(code, what);
  }
}

}  // namespace detail

}  // namespace hierreconc
