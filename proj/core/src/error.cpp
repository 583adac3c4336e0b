#include "cmiprune/error.hpp"

namespace cmiprune {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::NonFiniteInput: return "NonFiniteInput";
    case ErrorCode::ZeroDiagonal: return "ZeroDiagonal";
    case ErrorCode::EigenFailure: return "EigenFailure";
    case ErrorCode::NegativeSpectrum: return "NegativeSpectrum";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::ZeroTrace: return "ZeroTrace";
    case ErrorCode::EmptyLayer: return "EmptyLayer";
    case ErrorCode::ContextStrategyMismatch: return "ContextStrategyMismatch";
    case ErrorCode::EvaluatorFailure: return "EvaluatorFailure";
    case ErrorCode::EmptyRemaining: return "EmptyRemaining";
    case ErrorCode::LayerCountMismatch: return "LayerCountMismatch";
    case ErrorCode::PlanModelMismatch: return "PlanModelMismatch";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::MaskShapeMismatch: return "MaskShapeMismatch";
    case ErrorCode::LastLayerPruneAttempt: return "LastLayerPruneAttempt";
    case ErrorCode::DivergenceDetected: return "DivergenceDetected";
    case ErrorCode::ManifestMissing: return "ManifestMissing";
    case ErrorCode::HeaderMismatch: return "HeaderMismatch";
    case ErrorCode::TruncatedTensor: return "TruncatedTensor";
    case ErrorCode::ChecksumMismatch: return "ChecksumMismatch";
    case ErrorCode::IoFailure: return "IoFailure";
    case ErrorCode::ConfigInvalid: return "ConfigInvalid";
  }
  return "Unknown";
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

void raise(ErrorCode code, const std::string& message) { throw Error(code, message); }

}  // namespace cmiprune
