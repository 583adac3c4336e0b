#include "cmiprune/feature_ordering.hpp"

#include "cmiprune/error.hpp"
#include "cmiprune/parallel.hpp"

#include <string>

namespace cmiprune {

std::string_view to_string(Strategy s) noexcept {
  switch (s) {
    case Strategy::per_layer: return "per_layer";
    case Strategy::cross_full: return "cross_full";
    case Strategy::cross_compact: return "cross_compact";
  }
  return "per_layer";
}

Strategy parse_strategy(std::string_view text) {
  if (text == "per_layer" || text == "per-layer" || text == "layer") return Strategy::per_layer;
  if (text == "cross_full" || text == "full") return Strategy::cross_full;
  if (text == "cross_compact" || text == "compact") return Strategy::cross_compact;
  raise(ErrorCode::ConfigInvalid, "unknown strategy '" + std::string(text) + "'");
}

KernelList build_layer_kernels(const LayerFeatures& layer, const KernelSpec& spec) {
  require(!layer.features.empty(), ErrorCode::EmptyLayer,
          "layer " + std::to_string(layer.layer_id) + " has no features");
  const Eigen::Index n = layer.samples();
  KernelList kernels(layer.features.size(), NormalizedKernel::constant(1));
  parallel_for(layer.features.size(), [&](std::size_t f) {
    const FeatureMatrix& fm = layer.features[f];
    require(fm.samples() == n, ErrorCode::DimensionMismatch,
            "feature " + std::to_string(f) + " has a different sample count");
    try {
      kernels[f] = build_kernel(fm, spec);
    } catch (const Error& e) {
      raise(e.code(), "layer " + std::to_string(layer.layer_id) + " feature " +
                          std::to_string(f) + ": " + e.what());
    }
  });
  return kernels;
}

NormalizedKernel label_kernel(std::span<const int> labels) {
  FeatureMatrix y;
  y.data.resize(static_cast<Eigen::Index>(labels.size()), 1);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    y.data(static_cast<Eigen::Index>(i), 0) = labels[i];
  }
  return build_kernel(y, KernelSpec::delta());
}

OrderedLayer order_layer(std::span<const NormalizedKernel> feature_kernels,
                         const NormalizedKernel& y_kernel, const ConditioningContext& ctx,
                         EntropyOrder order, int layer_id) {
  require(!feature_kernels.empty(), ErrorCode::EmptyLayer,
          "layer " + std::to_string(layer_id) + " has no features");
  const Eigen::Index n = y_kernel.size();
  for (const auto& k : feature_kernels) {
    require(k.size() == n, ErrorCode::DimensionMismatch,
            "feature kernel size differs from the label kernel");
  }
  require(ctx.strategy != Strategy::per_layer || ctx.selected_kernels.empty(),
          ErrorCode::ContextStrategyMismatch, "per-layer ordering takes no context");

  // C: context layers first, then F^o in selection order.
  HadamardProduct conditioning(n);
  if (ctx.strategy == Strategy::cross_compact && !ctx.selected_kernels.empty()) {
    conditioning.multiply(ctx.selected_kernels.back());
  } else if (ctx.strategy == Strategy::cross_full) {
    for (const auto& layer : ctx.selected_kernels) conditioning.multiply(layer);
  }

  // F^u and F^o always partition the layer, so the joint terms that contain
  // both of them are the same at every iteration.
  HadamardProduct everything = conditioning;
  everything.multiply(feature_kernels);
  const double s_all = everything.entropy(order);
  const double s_all_y = everything.times(y_kernel).entropy(order);
  const double s_y = renyi_entropy(y_kernel, order);

  const int count = static_cast<int>(feature_kernels.size());
  std::vector<int> unordered(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) unordered[static_cast<std::size_t>(i)] = i;

  OrderedLayer out;
  out.layer_id = layer_id;
  out.order.reserve(unordered.size());
  out.cmi_values.reserve(unordered.size());

  struct Score {
    double mi = 0.0;
    double s_joint = 0.0;    // S(C, F^o, f)
    double s_joint_y = 0.0;  // S(C, F^o, f, Y)
  };
  std::vector<Score> scores;

  while (!unordered.empty()) {
    scores.assign(unordered.size(), Score{});
    parallel_for(unordered.size(), [&](std::size_t c) {
      const HadamardProduct with_f =
          conditioning.times(feature_kernels[static_cast<std::size_t>(unordered[c])]);
      Score& s = scores[c];
      s.s_joint = with_f.entropy(order);
      s.s_joint_y = with_f.times(y_kernel).entropy(order);
      s.mi = s_y + s.s_joint - s.s_joint_y;
    });

    // unordered stays sorted ascending, so a strict comparison keeps the
    // lowest index on ties regardless of how candidates were scheduled.
    std::size_t best = 0;
    for (std::size_t c = 1; c < scores.size(); ++c) {
      if (scores[c].mi > scores[best].mi) best = c;
    }
    const int picked = unordered[best];
    conditioning.multiply(feature_kernels[static_cast<std::size_t>(picked)]);
    out.order.push_back(picked);
    unordered.erase(unordered.begin() + static_cast<std::ptrdiff_t>(best));

    if (unordered.empty()) {
      out.cmi_values.push_back(0.0);
    } else {
      // I(Y; F^u | Z) = S(F^u, Z) + S(Y, Z) - S(F^u, Y, Z) - S(Z), Z = C + F^o.
      out.cmi_values.push_back(s_all + scores[best].s_joint_y - s_all_y - scores[best].s_joint);
    }
  }
  return out;
}

OrderedLayer order_layer(const LayerFeatures& layer, const NormalizedKernel& y_kernel,
                         const ConditioningContext& ctx, EntropyOrder order,
                         const KernelSpec& spec) {
  const KernelList kernels = build_layer_kernels(layer, spec);
  return order_layer(kernels, y_kernel, ctx, order, layer.layer_id);
}

}  // namespace cmiprune
