#include "cmiprune/cutoff.hpp"

#include "cmiprune/error.hpp"
#include "cmiprune/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

namespace cmiprune {
namespace {

double run_trial(const TrialEvaluator& eval, int layer_id, std::span<const int> retained) {
  require(static_cast<bool>(eval), ErrorCode::EvaluatorFailure,
          "trial pruning requested without an evaluator");
  double accuracy = 0.0;
  try {
    accuracy = eval(layer_id, retained);
  } catch (const std::exception& e) {
    raise(ErrorCode::EvaluatorFailure,
          "layer " + std::to_string(layer_id) + " evaluation failed: " + e.what());
  }
  require(std::isfinite(accuracy) && accuracy >= 0.0 && accuracy <= 1.0,
          ErrorCode::EvaluatorFailure, "evaluator returned an accuracy outside [0, 1]");
  return accuracy;
}

std::vector<int> prefix(const OrderedLayer& ordered, int count) {
  return {ordered.order.begin(), ordered.order.begin() + count};
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

std::string_view to_string(CutoffMethod m) noexcept {
  switch (m) {
    case CutoffMethod::scree: return "scree";
    case CutoffMethod::xmeans: return "xmeans";
    case CutoffMethod::permutation: return "permutation";
  }
  return "scree";
}

CutoffMethod parse_cutoff_method(std::string_view text) {
  if (text == "scree") return CutoffMethod::scree;
  if (text == "xmeans" || text == "x-means") return CutoffMethod::xmeans;
  if (text == "permutation") return CutoffMethod::permutation;
  raise(ErrorCode::ConfigInvalid, "unknown cutoff method '" + std::string(text) + "'");
}

std::vector<double> qda_slopes(std::span<const double> cmi, double denom_epsilon) {
  std::vector<double> slopes;
  if (cmi.size() < 3) return slopes;
  slopes.reserve(cmi.size() - 2);
  for (std::size_t i = 0; i + 2 < cmi.size(); ++i) {
    const double drop = cmi[i] - cmi[i + 1];
    const double next_drop = std::max(cmi[i + 1] - cmi[i + 2], denom_epsilon);
    slopes.push_back(drop / next_drop);
  }
  return slopes;
}

CutoffResult scree_cutoff(const OrderedLayer& ordered, const ScreeParams& params,
                          const TrialEvaluator& eval) {
  require(params.top_k >= 1, ErrorCode::InvalidArgument, "scree top_k must be at least 1");
  require(params.denom_epsilon > 0.0, ErrorCode::InvalidArgument,
          "scree denominator guard must be positive");
  CutoffResult result;
  const int count = ordered.size();
  if (count < 3) {
    result.too_few_values = true;
    result.cutoff_index = count;
    result.selected = ordered.order;
    return result;
  }

  result.slopes = qda_slopes(ordered.cmi_values, params.denom_epsilon);
  std::vector<int> ranked(result.slopes.size());
  std::iota(ranked.begin(), ranked.end(), 0);
  std::stable_sort(ranked.begin(), ranked.end(), [&](int a, int b) {
    return result.slopes[static_cast<std::size_t>(a)] > result.slopes[static_cast<std::size_t>(b)];
  });
  const auto k = std::min<std::size_t>(static_cast<std::size_t>(params.top_k), ranked.size());

  if (k == 1) {
    // Single candidate: the max-slope point, no trial pruning.
    result.cutoff_index = ranked.front() + 1;
    result.selected = prefix(ordered, result.cutoff_index);
    return result;
  }

  for (std::size_t j = 0; j < k; ++j) {
    const int index = ranked[j] + 1;
    const std::vector<int> retained = prefix(ordered, index);
    result.candidates.push_back({index, run_trial(eval, ordered.layer_id, retained)});
  }
  result.evaluated = true;

  const CutoffCandidate* chosen = nullptr;
  for (const auto& c : result.candidates) {
    if (c.accuracy >= params.target_accuracy && (chosen == nullptr || c.index < chosen->index)) {
      chosen = &c;
    }
  }
  if (chosen != nullptr) {
    result.met_target = true;
  } else {
    result.fallback = true;
    for (const auto& c : result.candidates) {
      if (chosen == nullptr) {
        chosen = &c;
      } else if (params.fallback == ScreeParams::Fallback::max_candidate) {
        if (c.index > chosen->index) chosen = &c;
      } else if (c.accuracy > chosen->accuracy ||
                 (c.accuracy == chosen->accuracy && c.index < chosen->index)) {
        chosen = &c;
      }
    }
  }
  result.cutoff_index = chosen->index;
  result.accuracy = chosen->accuracy;
  result.selected = prefix(ordered, result.cutoff_index);
  return result;
}

CutoffResult xmeans_cutoff(const OrderedLayer& ordered, const XMeansParams& params,
                           const TrialEvaluator& eval) {
  const int count = ordered.size();
  require(count >= 1, ErrorCode::EmptyLayer, "X-Means cutoff on an empty layer");
  const int k_max = params.k_max > 0 ? params.k_max : (count + 1) / 2;
  require(params.k_init >= 1 && params.k_init <= k_max && k_max <= count,
          ErrorCode::InvalidArgument, "X-Means needs 1 <= k_init <= k_max <= |C|");

  const Clustering clustering =
      xmeans_1d(ordered.cmi_values, params.k_init, k_max, params.rng_seed);
  CutoffResult result;
  result.clusters = static_cast<int>(clustering.centers.size());

  std::vector<int> by_center(clustering.centers.size());
  std::iota(by_center.begin(), by_center.end(), 0);
  std::stable_sort(by_center.begin(), by_center.end(), [&](int a, int b) {
    return clustering.centers[static_cast<std::size_t>(a)] >
           clustering.centers[static_cast<std::size_t>(b)];
  });

  std::vector<bool> keep(static_cast<std::size_t>(count), false);
  for (int cluster : by_center) {
    for (int pos = 0; pos < count; ++pos) {
      if (clustering.assignment[static_cast<std::size_t>(pos)] == cluster) {
        keep[static_cast<std::size_t>(pos)] = true;
      }
    }
    std::vector<int> retained;
    for (int pos = 0; pos < count; ++pos) {
      if (keep[static_cast<std::size_t>(pos)]) {
        retained.push_back(ordered.order[static_cast<std::size_t>(pos)]);
      }
    }
    const double accuracy = run_trial(eval, ordered.layer_id, retained);
    result.evaluated = true;
    result.candidates.push_back({static_cast<int>(retained.size()), accuracy});
    if (accuracy >= params.target_accuracy) {
      result.met_target = true;
      result.accuracy = accuracy;
      result.selected = std::move(retained);
      result.cutoff_index = static_cast<int>(result.selected.size());
      return result;
    }
  }

  result.fallback = true;
  result.selected = ordered.order;
  result.cutoff_index = count;
  result.accuracy = result.candidates.back().accuracy;
  return result;
}

PermutationOutcome permutation_cutoff(std::span<const NormalizedKernel> selected,
                                      std::span<const NormalizedKernel> remaining,
                                      const NormalizedKernel& y_kernel,
                                      const PermutationParams& params, EntropyOrder order,
                                      std::uint64_t stream) {
  require(!remaining.empty(), ErrorCode::EmptyRemaining, "permutation test with nothing left");
  require(params.permutations >= 1, ErrorCode::InvalidArgument,
          "permutation count must be at least 1");
  require(params.significance > 0.0 && params.significance < 1.0, ErrorCode::InvalidArgument,
          "significance level must lie in (0, 1)");

  const NormalizedKernel& candidate = remaining.front();
  const std::span<const NormalizedKernel> rest = remaining.subspan(1);
  const Eigen::Index n = y_kernel.size();

  auto cmi_given = [&](const NormalizedKernel& f) {
    if (rest.empty()) return 0.0;
    KernelList conditioning(selected.begin(), selected.end());
    conditioning.push_back(f);
    return conditional_mi(rest, y_kernel, conditioning, order);
  };

  PermutationOutcome outcome;
  outcome.baseline = cmi_given(candidate);

  const auto trials = static_cast<std::size_t>(params.permutations);
  std::vector<char> not_smaller(trials, 0);
  parallel_for(trials, [&](std::size_t t) {
    std::mt19937_64 rng(splitmix64(params.rng_seed ^ splitmix64(stream * 1000003ULL + t)));
    std::vector<int> perm(static_cast<std::size_t>(n));
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    not_smaller[t] = outcome.baseline >= cmi_given(candidate.permuted(perm)) ? 1 : 0;
  });

  const auto hits = std::count(not_smaller.begin(), not_smaller.end(), 1);
  outcome.fraction = static_cast<double>(hits) / static_cast<double>(trials);
  if (outcome.fraction <= params.significance) {
    outcome.decision = PermutationDecision::continue_selection;
    outcome.retained_count = static_cast<int>(selected.size()) + 1;
  } else {
    outcome.decision = PermutationDecision::stop;
    outcome.retained_count = static_cast<int>(selected.size());
  }
  return outcome;
}

CutoffResult permutation_select(const OrderedLayer& ordered,
                                std::span<const NormalizedKernel> feature_kernels,
                                const NormalizedKernel& y_kernel, const PermutationParams& params,
                                EntropyOrder order) {
  const int count = ordered.size();
  require(count >= 1, ErrorCode::EmptyLayer, "permutation cutoff on an empty layer");
  KernelList in_order;
  in_order.reserve(static_cast<std::size_t>(count));
  for (int f : ordered.order) in_order.push_back(feature_kernels[static_cast<std::size_t>(f)]);

  CutoffResult result;
  int retained = 0;
  while (retained < count) {
    const std::span<const NormalizedKernel> all(in_order);
    const PermutationOutcome step =
        permutation_cutoff(all.first(static_cast<std::size_t>(retained)),
                           all.subspan(static_cast<std::size_t>(retained)), y_kernel, params,
                           order, static_cast<std::uint64_t>(retained));
    retained = step.retained_count;
    if (step.decision == PermutationDecision::stop) break;
  }
  result.cutoff_index = retained;
  result.selected = prefix(ordered, retained);
  return result;
}

}  // namespace cmiprune
