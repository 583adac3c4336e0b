#include "cmiprune/orchestrator.hpp"

#include "cmiprune/error.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace cmiprune {

std::string_view to_string(Direction d) noexcept {
  return d == Direction::forward ? "forward" : "bidirectional";
}

Direction parse_direction(std::string_view text) {
  if (text == "forward") return Direction::forward;
  if (text == "bidirectional" || text == "bi-directional" || text == "bidi") {
    return Direction::bidirectional;
  }
  raise(ErrorCode::ConfigInvalid, "unknown direction '" + std::string(text) + "'");
}

void PruneConfig::validate() const {
  (void)EntropyOrder(alpha);
  require(direction == Direction::forward || strategy != Strategy::per_layer,
          ErrorCode::ConfigInvalid, "bidirectional pruning needs cross_full or cross_compact");
  require(!(mode == PruneMode::actual && prune_last_layer), ErrorCode::ConfigInvalid,
          "the final conv layer cannot be pruned in actual mode");
  auto fraction = [](const std::optional<double>& v) {
    return !v || (std::isfinite(*v) && *v >= 0.0 && *v <= 1.0);
  };
  require(fraction(target_accuracy), ErrorCode::ConfigInvalid, "target accuracy outside [0, 1]");
  require(fraction(accuracy_drop), ErrorCode::ConfigInvalid, "accuracy drop outside [0, 1]");
  require(scree.top_k >= 1, ErrorCode::ConfigInvalid, "scree K must be at least 1");
  require(permutation.permutations >= 1, ErrorCode::ConfigInvalid,
          "permutation count must be at least 1");
  require(permutation.significance > 0.0 && permutation.significance < 1.0,
          ErrorCode::ConfigInvalid, "significance level must lie in (0, 1)");
}

double ToyPruneTarget::evaluate(const MaskSet& masks) {
  ++evaluations_;
  return cmiprune::evaluate(apply_mask(model_, masks, mode_), data_);
}

MaskSet PruningPlan::masks() const {
  MaskSet m;
  for (const auto& layer : layers) {
    std::vector<bool> keep(static_cast<std::size_t>(layer.num_filters), false);
    for (int f : layer.selected) keep[static_cast<std::size_t>(f)] = true;
    m.keep.push_back(std::move(keep));
  }
  return m;
}

int PruningPlan::filters_total() const {
  int total = 0;
  for (const auto& layer : layers) total += layer.num_filters;
  return total;
}

int PruningPlan::filters_pruned() const {
  int total = 0;
  for (const auto& layer : layers) total += static_cast<int>(layer.pruned.size());
  return total;
}

namespace {

std::uint64_t layer_seed(std::uint64_t seed, int layer_id) {
  return seed + 0x9E3779B97F4A7C15ULL * static_cast<std::uint64_t>(layer_id);
}

[[noreturn]] void rethrow_for_layer(const Error& e, int layer_id) {
  std::string msg = e.what();
  const std::string prefix = std::string(to_string(e.code())) + ": ";
  if (msg.starts_with(prefix)) msg.erase(0, prefix.size());
  raise(e.code(), "layer " + std::to_string(layer_id) + ": " + msg);
}

class Runner {
 public:
  Runner(PruneTarget* target, std::span<const KernelList> kernels, const NormalizedKernel& y,
         const PruneConfig& cfg)
      : target_(target), kernels_(kernels), y_(y), cfg_(cfg), order_(cfg.alpha) {
    cfg.validate();
    require(!kernels.empty(), ErrorCode::LayerCountMismatch, "no layers to prune");
    for (const auto& list : kernels) filters_.push_back(static_cast<int>(list.size()));
    if (target_ != nullptr) {
      const std::vector<int> expected = target_->filters_per_layer();
      require(expected.size() == filters_.size(), ErrorCode::LayerCountMismatch,
              "features cover " + std::to_string(filters_.size()) + " layers, model has " +
                  std::to_string(expected.size()));
      for (std::size_t l = 0; l < expected.size(); ++l) {
        require(expected[l] == filters_[l], ErrorCode::LayerCountMismatch,
                "layer " + std::to_string(l + 1) + " has " + std::to_string(filters_[l]) +
                    " feature maps but " + std::to_string(expected[l]) + " filters");
      }
    }

    plan_.strategy = cfg.strategy;
    plan_.cutoff = cfg.cutoff;
    plan_.direction = cfg.direction;
    plan_.mode = cfg.mode;
    plan_.alpha = cfg.alpha;
    plan_.evaluator_available = target_ != nullptr;
    plan_.layers.resize(filters_.size());
    committed_ = MaskSet::all_kept(filters_);

    plan_.full_accuracy = evaluate(committed_);
    if (cfg.target_accuracy) {
      plan_.target_accuracy = *cfg.target_accuracy;
    } else {
      plan_.target_accuracy = plan_.full_accuracy - cfg.accuracy_drop.value_or(0.0);
    }
  }

  PruningPlan forward() {
    plan_.direction = Direction::forward;
    plan_.start_layer = 1;
    for (int l = 0; l < layers(); ++l) {
      std::vector<int> context;
      if (cfg_.strategy == Strategy::cross_compact && l > 0) {
        context = {l - 1};
      } else if (cfg_.strategy == Strategy::cross_full) {
        for (int j = 0; j < l; ++j) context.push_back(j);
      }
      commit(run_layer(l, cfg_.strategy, context, committed_, "forward"));
    }
    return std::move(plan_);
  }

  PruningPlan bidirectional() {
    plan_.direction = Direction::bidirectional;
    std::vector<LayerPlan> stage1;
    const MaskSet unpruned = MaskSet::all_kept(filters_);
    for (int l = 0; l < layers(); ++l) {
      LayerPlan lp = run_layer(l, Strategy::per_layer, {}, unpruned, "start");
      plan_.stage1_ratio.push_back(
          1.0 - static_cast<double>(lp.selected.size()) / static_cast<double>(lp.num_filters));
      plan_.stage1_accuracy.push_back(*lp.cutoff.accuracy);
      stage1.push_back(std::move(lp));
    }

    // An exempt layer is never trial-pruned, so it only starts the sweeps
    // when nothing else can.
    auto candidate = [&](int l) { return !exempt(l) || layers() == 1; };
    int start = -1;
    for (int l = 0; l < layers(); ++l) {
      const auto i = static_cast<std::size_t>(l);
      if (!candidate(l) || plan_.stage1_accuracy[i] < plan_.target_accuracy) continue;
      if (start < 0 || plan_.stage1_ratio[i] > plan_.stage1_ratio[static_cast<std::size_t>(start)]) {
        start = l;
      }
    }
    if (start < 0) {
      plan_.no_feasible_start = true;
      for (int l = 0; l < layers(); ++l) {
        if (candidate(l) && (start < 0 || plan_.stage1_accuracy[static_cast<std::size_t>(l)] >
                                              plan_.stage1_accuracy[static_cast<std::size_t>(start)])) {
          start = l;
        }
      }
    }
    plan_.start_layer = start + 1;

    if (cfg_.keep_stage1_masks) {
      for (int l = 0; l < layers(); ++l) {
        committed_.retain_only(l, stage1[static_cast<std::size_t>(l)].selected);
      }
    }
    commit(std::move(stage1[static_cast<std::size_t>(start)]));

    std::vector<int> done = {start};
    for (int l = start + 1; l < layers(); ++l) {
      const std::vector<int> context =
          cfg_.strategy == Strategy::cross_compact ? std::vector<int>{l - 1} : done;
      commit(run_layer(l, cfg_.strategy, context, committed_, "forward"));
      done.push_back(l);
    }
    done = {start};
    for (int l = start - 1; l >= 0; --l) {
      const std::vector<int> context =
          cfg_.strategy == Strategy::cross_compact ? std::vector<int>{l + 1} : done;
      commit(run_layer(l, cfg_.strategy, context, committed_, "backward"));
      done.push_back(l);
    }
    return std::move(plan_);
  }

 private:
  [[nodiscard]] int layers() const noexcept { return static_cast<int>(filters_.size()); }

  [[nodiscard]] bool exempt(int l) const noexcept {
    return l == layers() - 1 && !(cfg_.prune_last_layer && cfg_.mode == PruneMode::zero_weight);
  }

  double evaluate(const MaskSet& masks) {
    if (target_ == nullptr) return 1.0;
    const double acc = target_->evaluate(masks);
    require(std::isfinite(acc) && acc >= 0.0 && acc <= 1.0, ErrorCode::EvaluatorFailure,
            "model evaluation returned " + std::to_string(acc));
    return acc;
  }

  KernelList selected_kernels(int l) const {
    KernelList out;
    const auto& list = kernels_[static_cast<std::size_t>(l)];
    for (int f : plan_.layers[static_cast<std::size_t>(l)].selected) {
      out.push_back(list[static_cast<std::size_t>(f)]);
    }
    return out;
  }

  LayerPlan run_layer(int l, Strategy strategy, const std::vector<int>& context,
                      const MaskSet& base, const char* stage) {
    const int layer_id = l + 1;
    LayerPlan lp;
    lp.layer_id = layer_id;
    lp.num_filters = filters_[static_cast<std::size_t>(l)];
    lp.stage = stage;
    lp.exempt = exempt(l);
    try {
      ConditioningContext ctx;
      ctx.strategy = strategy;
      for (int j : context) {
        KernelList sel = selected_kernels(j);
        if (sel.empty()) continue;
        ctx.selected_kernels.push_back(std::move(sel));
        lp.conditioned_on.push_back(j + 1);
      }
      const KernelList& features = kernels_[static_cast<std::size_t>(l)];
      lp.ordered = order_layer(features, y_, ctx, order_, layer_id);

      const TrialEvaluator eval = [&](int, std::span<const int> retained) {
        MaskSet trial = base;
        trial.retain_only(l, std::vector<int>(retained.begin(), retained.end()));
        return evaluate(trial);
      };

      if (lp.exempt) {
        lp.cutoff.selected = lp.ordered.order;
        lp.cutoff.cutoff_index = lp.ordered.size();
      } else if (cfg_.cutoff == CutoffMethod::scree) {
        ScreeParams p = cfg_.scree;
        p.target_accuracy = plan_.target_accuracy;
        lp.cutoff = scree_cutoff(lp.ordered, p, eval);
      } else if (cfg_.cutoff == CutoffMethod::xmeans) {
        XMeansParams p = cfg_.xmeans;
        p.target_accuracy = plan_.target_accuracy;
        p.rng_seed = layer_seed(cfg_.seed, layer_id);
        lp.cutoff = xmeans_cutoff(lp.ordered, p, eval);
      } else {
        PermutationParams p = cfg_.permutation;
        p.rng_seed = layer_seed(cfg_.seed, layer_id);
        lp.cutoff = permutation_select(lp.ordered, features, y_, p, order_);
      }

      if (!lp.cutoff.accuracy) {
        MaskSet trial = base;
        trial.retain_only(l, lp.cutoff.selected);
        lp.cutoff.accuracy = evaluate(trial);
        lp.cutoff.met_target = *lp.cutoff.accuracy >= plan_.target_accuracy;
        lp.cutoff.fallback = !lp.cutoff.met_target;
      }
    } catch (const Error& e) {
      rethrow_for_layer(e, layer_id);
    }

    lp.selected = lp.cutoff.selected;
    std::vector<bool> keep(static_cast<std::size_t>(lp.num_filters), false);
    for (int f : lp.selected) keep[static_cast<std::size_t>(f)] = true;
    for (int f = 0; f < lp.num_filters; ++f) {
      if (!keep[static_cast<std::size_t>(f)]) lp.pruned.push_back(f);
    }
    return lp;
  }

  void commit(LayerPlan lp) {
    const int l = lp.layer_id - 1;
    committed_.retain_only(l, lp.selected);
    lp.committed = true;
    plan_.visit_order.push_back(lp.layer_id);
    plan_.layers[static_cast<std::size_t>(l)] = std::move(lp);
  }

  PruneTarget* target_;
  std::span<const KernelList> kernels_;
  const NormalizedKernel& y_;
  const PruneConfig& cfg_;
  EntropyOrder order_;
  std::vector<int> filters_;
  MaskSet committed_;
  PruningPlan plan_;
};

std::size_t shape_walk_parameters(const ToyModel& model, const MaskSet& masks) {
  std::size_t total = 0;
  int in_channels = model.input_channels;
  for (int l = 0; l < model.num_layers(); ++l) {
    const ConvLayer& layer = model.conv[static_cast<std::size_t>(l)];
    const auto out = static_cast<std::size_t>(masks.kept(l));
    total += out * static_cast<std::size_t>(in_channels) * layer.kernel * layer.kernel + out;
    if (layer.bn) total += 2 * out;
    in_channels = static_cast<int>(out);
  }
  const ConvLayer& last = model.conv.back();
  const auto per_channel = static_cast<std::size_t>(model.head.weight.cols() / last.out_channels);
  const auto classes = static_cast<std::size_t>(model.num_classes());
  total += classes * per_channel * static_cast<std::size_t>(in_channels) + classes;
  return total;
}

}  // namespace

PruningPlan forward_prune(PruneTarget* target, std::span<const KernelList> layer_kernels,
                          const NormalizedKernel& y_kernel, const PruneConfig& cfg) {
  return Runner(target, layer_kernels, y_kernel, cfg).forward();
}

PruningPlan bidirectional_prune(PruneTarget* target, std::span<const KernelList> layer_kernels,
                                const NormalizedKernel& y_kernel, const PruneConfig& cfg) {
  return Runner(target, layer_kernels, y_kernel, cfg).bidirectional();
}

PruningPlan prune(PruneTarget* target, std::span<const KernelList> layer_kernels,
                  const NormalizedKernel& y_kernel, const PruneConfig& cfg) {
  return cfg.direction == Direction::forward
             ? forward_prune(target, layer_kernels, y_kernel, cfg)
             : bidirectional_prune(target, layer_kernels, y_kernel, cfg);
}

PruningPlan prune(PruneTarget* target, std::span<const LayerFeatures> features,
                  const NormalizedKernel& y_kernel, const PruneConfig& cfg) {
  std::vector<KernelList> kernels;
  kernels.reserve(features.size());
  for (const auto& layer : features) kernels.push_back(build_layer_kernels(layer, cfg.kernel));
  return prune(target, std::span<const KernelList>(kernels), y_kernel, cfg);
}

PruneReport summarize_counts(const PruningPlan& plan) {
  PruneReport report;
  report.filters_total = plan.filters_total();
  report.filters_pruned = plan.filters_pruned();
  report.pruned_percent = report.filters_total == 0
                              ? 0.0
                              : static_cast<double>(report.filters_pruned) / report.filters_total;
  report.config_hash = plan.config_hash;
  for (const auto& layer : plan.layers) {
    LayerReport row;
    row.layer_id = layer.layer_id;
    row.filters = layer.num_filters;
    row.retained = static_cast<int>(layer.selected.size());
    row.pruned = static_cast<int>(layer.pruned.size());
    row.stage = layer.stage;
    row.met_target = layer.cutoff.met_target;
    row.fallback = layer.cutoff.fallback;
    row.exempt = layer.exempt;
    report.layers.push_back(std::move(row));
  }
  return report;
}

PruneReport summarize(const PruningPlan& plan, const ToyModel& model, const LabeledDataset& data) {
  require(static_cast<int>(plan.layers.size()) == model.num_layers(), ErrorCode::PlanModelMismatch,
          "plan covers " + std::to_string(plan.layers.size()) + " layers, model has " +
              std::to_string(model.num_layers()));
  for (int l = 0; l < model.num_layers(); ++l) {
    const LayerPlan& lp = plan.layers[static_cast<std::size_t>(l)];
    require(lp.num_filters == model.conv[static_cast<std::size_t>(l)].out_channels &&
                lp.selected.size() + lp.pruned.size() == static_cast<std::size_t>(lp.num_filters),
            ErrorCode::PlanModelMismatch,
            "plan entry for layer " + std::to_string(l + 1) + " does not match the model");
  }

  PruneReport report = summarize_counts(plan);
  const MaskSet masks = plan.masks();
  report.parameters_total = parameter_count(model);
  report.parameters_retained = shape_walk_parameters(model, masks);
  report.accuracy_full = evaluate(model, data);
  report.accuracy_before_retrain = evaluate(apply_mask(model, masks, plan.mode), data);
  return report;
}

}  // namespace cmiprune
