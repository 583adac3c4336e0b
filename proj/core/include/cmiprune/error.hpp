#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace cmiprune {

enum class ErrorCode {
  InvalidArgument,
  NonFiniteInput,
  ZeroDiagonal,
  EigenFailure,
  NegativeSpectrum,
  DimensionMismatch,
  ZeroTrace,
  EmptyLayer,
  ContextStrategyMismatch,
  EvaluatorFailure,
  EmptyRemaining,
  LayerCountMismatch,
  PlanModelMismatch,
  ShapeMismatch,
  MaskShapeMismatch,
  LastLayerPruneAttempt,
  DivergenceDetected,
  ManifestMissing,
  HeaderMismatch,
  TruncatedTensor,
  ChecksumMismatch,
  IoFailure,
  ConfigInvalid,
};

std::string_view to_string(ErrorCode code) noexcept;

/// Every failure raised by the library carries one of the codes above so that
/// callers (and the CLI exit path) can branch on the kind without parsing text.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message);

  [[nodiscard]] ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] void raise(ErrorCode code, const std::string& message);

inline void require(bool condition, ErrorCode code, const std::string& message) {
  if (!condition) raise(code, message);
}

}  // namespace cmiprune
