#pragma once

#include <string_view>
#include <vector>

namespace cmiprune {

enum class PruneMode { zero_weight, actual };

std::string_view to_string(PruneMode m) noexcept;
PruneMode parse_prune_mode(std::string_view text);

/// Per conv layer keep-flags over output filters.
struct MaskSet {
  std::vector<std::vector<bool>> keep;

  static MaskSet all_kept(const std::vector<int>& filters_per_layer);

  [[nodiscard]] int layers() const noexcept { return static_cast<int>(keep.size()); }
  [[nodiscard]] int kept(int layer) const;
  [[nodiscard]] bool all_kept_at(int layer) const;

  /// keep[layer] := only the listed filters.
  void retain_only(int layer, const std::vector<int>& filters);
};

}  // namespace cmiprune
