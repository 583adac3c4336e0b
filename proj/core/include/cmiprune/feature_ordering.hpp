#pragma once

#include "cmiprune/entropy.hpp"

#include <string_view>
#include <vector>

namespace cmiprune {

/// All feature maps of one layer, sampled on a shared batch.
struct LayerFeatures {
  int layer_id = 0;
  int height = 0;  // spatial dims of each map; d = height * width
  int width = 0;
  std::vector<FeatureMatrix> features;

  [[nodiscard]] int size() const noexcept { return static_cast<int>(features.size()); }
  [[nodiscard]] Eigen::Index samples() const {
    return features.empty() ? 0 : features.front().samples();
  }
};

enum class Strategy { per_layer, cross_full, cross_compact };

std::string_view to_string(Strategy s) noexcept;
Strategy parse_strategy(std::string_view text);

/// Selected-feature kernels of already-committed layers, oldest first.
/// cross_compact conditions on the last entry only, cross_full on all of
/// them, and per_layer requires the list to be empty.
struct ConditioningContext {
  Strategy strategy = Strategy::per_layer;
  std::vector<KernelList> selected_kernels;

  static ConditioningContext per_layer() { return {}; }
};

struct OrderedLayer {
  int layer_id = 0;
  std::vector<int> order;           // feature indices, most informative first
  std::vector<double> cmi_values;   // c_i after the i-th pick; last entry is 0

  [[nodiscard]] int size() const noexcept { return static_cast<int>(order.size()); }
};

/// One kernel per feature map, aligned with feature indices.
KernelList build_layer_kernels(const LayerFeatures& layer, const KernelSpec& spec);

/// Greedy ordering: each step picks the feature f maximizing
/// I(Y; C, F^o + f), moves it to the ordered set and records
/// c = I(Y; F^u | C, F^o), where C is the context chosen by the strategy.
/// Ties go to the lowest feature index.
OrderedLayer order_layer(std::span<const NormalizedKernel> feature_kernels,
                         const NormalizedKernel& y_kernel, const ConditioningContext& ctx,
                         EntropyOrder order, int layer_id = 0);

OrderedLayer order_layer(const LayerFeatures& layer, const NormalizedKernel& y_kernel,
                         const ConditioningContext& ctx, EntropyOrder order,
                         const KernelSpec& spec = KernelSpec::rbf_median());

/// Delta kernel over integer class labels.
NormalizedKernel label_kernel(std::span<const int> labels);

}  // namespace cmiprune
