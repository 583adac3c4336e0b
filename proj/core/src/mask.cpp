#include "cmiprune/mask.hpp"

#include "cmiprune/error.hpp"

#include <algorithm>
#include <string>

namespace cmiprune {

std::string_view to_string(PruneMode m) noexcept {
  return m == PruneMode::actual ? "actual" : "zero_weight";
}

PruneMode parse_prune_mode(std::string_view text) {
  if (text == "zero_weight" || text == "zero-weight" || text == "zero") return PruneMode::zero_weight;
  if (text == "actual") return PruneMode::actual;
  raise(ErrorCode::ConfigInvalid, "unknown prune mode '" + std::string(text) + "'");
}

MaskSet MaskSet::all_kept(const std::vector<int>& filters_per_layer) {
  MaskSet m;
  for (int f : filters_per_layer) m.keep.emplace_back(static_cast<std::size_t>(f), true);
  return m;
}

int MaskSet::kept(int layer) const {
  const auto& k = keep.at(static_cast<std::size_t>(layer));
  return static_cast<int>(std::count(k.begin(), k.end(), true));
}

bool MaskSet::all_kept_at(int layer) const {
  const auto& k = keep.at(static_cast<std::size_t>(layer));
  return std::all_of(k.begin(), k.end(), [](bool b) { return b; });
}

void MaskSet::retain_only(int layer, const std::vector<int>& filters) {
  auto& k = keep.at(static_cast<std::size_t>(layer));
  std::fill(k.begin(), k.end(), false);
  for (int f : filters) {
    require(f >= 0 && f < static_cast<int>(k.size()), ErrorCode::MaskShapeMismatch,
            "filter index " + std::to_string(f) + " outside layer " + std::to_string(layer + 1));
    k[static_cast<std::size_t>(f)] = true;
  }
}

}  // namespace cmiprune
