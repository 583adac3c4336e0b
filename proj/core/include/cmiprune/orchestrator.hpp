#pragma once

// Whole-network pruning: forward sweep from the first conv layer, or
// bi-directional sweeps outward from the most prunable layer.

#include "cmiprune/cutoff.hpp"
#include "cmiprune/feature_ordering.hpp"
#include "cmiprune/mask.hpp"
#include "cmiprune/model.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace cmiprune {

enum class Direction { forward, bidirectional };

std::string_view to_string(Direction d) noexcept;
Direction parse_direction(std::string_view text);

struct PruneConfig {
  Strategy strategy = Strategy::cross_compact;
  CutoffMethod cutoff = CutoffMethod::scree;
  Direction direction = Direction::bidirectional;
  PruneMode mode = PruneMode::actual;
  /// a^p. When unset it is a^f - accuracy_drop (or a^f if both are unset).
  std::optional<double> target_accuracy;
  std::optional<double> accuracy_drop;
  double alpha = EntropyOrder::kDefault;
  KernelSpec kernel = KernelSpec::rbf_median();
  ScreeParams scree;
  XMeansParams xmeans;
  PermutationParams permutation;
  std::uint64_t seed = 0;
  /// The final conv layer is always kept whole in actual mode; zero-weight
  /// runs may opt in to pruning it.
  bool prune_last_layer = false;
  /// Bi-directional only: start the sweeps from the stage-1 masks of every
  /// layer instead of the unpruned model.
  bool keep_stage1_masks = false;

  void validate() const;
};

/// Model-side services the orchestrator needs: filter counts and the accuracy
/// of the model with a mask set applied (on the pruning data).
class PruneTarget {
 public:
  virtual ~PruneTarget() = default;
  [[nodiscard]] virtual std::vector<int> filters_per_layer() const = 0;
  virtual double evaluate(const MaskSet& masks) = 0;
};

/// PruneTarget backed by the toy harness.
class ToyPruneTarget final : public PruneTarget {
 public:
  ToyPruneTarget(const ToyModel& model, const LabeledDataset& data, PruneMode mode)
      : model_(model), data_(data), mode_(mode) {}

  [[nodiscard]] std::vector<int> filters_per_layer() const override {
    return model_.filters_per_layer();
  }
  double evaluate(const MaskSet& masks) override;
  [[nodiscard]] int evaluations() const noexcept { return evaluations_; }

 private:
  const ToyModel& model_;
  const LabeledDataset& data_;
  PruneMode mode_;
  int evaluations_ = 0;
};

struct LayerPlan {
  int layer_id = 0;
  int num_filters = 0;
  std::vector<int> selected;  // F^s, in CMI order
  std::vector<int> pruned;    // F^n, ascending
  OrderedLayer ordered;
  CutoffResult cutoff;
  std::string stage;                 // "forward", "start", "backward"
  std::vector<int> conditioned_on;   // layer ids in the conditioning context
  bool exempt = false;               // kept whole (final conv layer)
  bool committed = false;
};

struct PruningPlan {
  Strategy strategy = Strategy::cross_compact;
  CutoffMethod cutoff = CutoffMethod::scree;
  Direction direction = Direction::forward;
  PruneMode mode = PruneMode::actual;
  double alpha = EntropyOrder::kDefault;
  double full_accuracy = 1.0;    // a^f on the pruning data
  double target_accuracy = 1.0;  // a^p
  bool evaluator_available = true;
  int start_layer = 1;           // k* (1-based); 1 for forward pruning
  bool no_feasible_start = false;
  std::vector<double> stage1_ratio;     // r_k per layer (bi-directional)
  std::vector<double> stage1_accuracy;  // a_k per layer (bi-directional)
  std::vector<int> visit_order;         // layer ids in commitment order
  std::vector<LayerPlan> layers;        // indexed by layer position
  std::string config_hash;

  [[nodiscard]] MaskSet masks() const;
  [[nodiscard]] int filters_total() const;
  [[nodiscard]] int filters_pruned() const;
};

/// Sequential pruning of layers 1..N. `target` may be null, in which case
/// every trial evaluation reports accuracy 1.
PruningPlan forward_prune(PruneTarget* target, std::span<const KernelList> layer_kernels,
                          const NormalizedKernel& y_kernel, const PruneConfig& cfg);

PruningPlan bidirectional_prune(PruneTarget* target, std::span<const KernelList> layer_kernels,
                                const NormalizedKernel& y_kernel, const PruneConfig& cfg);

/// Builds kernels with cfg.kernel and dispatches on cfg.direction.
PruningPlan prune(PruneTarget* target, std::span<const LayerFeatures> features,
                  const NormalizedKernel& y_kernel, const PruneConfig& cfg);
PruningPlan prune(PruneTarget* target, std::span<const KernelList> layer_kernels,
                  const NormalizedKernel& y_kernel, const PruneConfig& cfg);

struct LayerReport {
  int layer_id = 0;
  int filters = 0;
  int retained = 0;
  int pruned = 0;
  std::string stage;
  bool met_target = false;
  bool fallback = false;
  bool exempt = false;
};

struct PruneReport {
  int filters_total = 0;
  int filters_pruned = 0;
  double pruned_percent = 0.0;  // filters_pruned / filters_total, as a fraction
  std::size_t parameters_total = 0;
  std::size_t parameters_retained = 0;
  double accuracy_full = 0.0;
  double accuracy_before_retrain = 0.0;
  std::optional<double> accuracy_after_retrain;
  std::vector<LayerReport> layers;
  std::string config_hash;
};

/// Table-style metrics of a plan on a model. Parameters retained count the
/// reduced shapes in actual mode and the non-zeroed weights in zero-weight
/// mode. Accuracies are measured on `data` (the held-out split).
PruneReport summarize(const PruningPlan& plan, const ToyModel& model, const LabeledDataset& data);

/// Counts-only report for runs without a model (external feature dumps).
PruneReport summarize_counts(const PruningPlan& plan);

}  // namespace cmiprune
