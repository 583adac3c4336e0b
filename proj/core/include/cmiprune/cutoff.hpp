#pragma once

// Cutoff selection over a CMI-ordered layer: scree test with the quotient of
// differences (QDA), 1-D X-Means clustering scored by BIC, and the
// sequential CMI permutation test.

#include "cmiprune/entropy.hpp"
#include "cmiprune/feature_ordering.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <string_view>
#include <vector>

namespace cmiprune {

/// Accuracy in [0, 1] of the model with only `retained` filters kept at the
/// given layer (on top of whatever the caller has already committed).
using TrialEvaluator = std::function<double(int layer_id, std::span<const int> retained)>;

enum class CutoffMethod { scree, xmeans, permutation };

std::string_view to_string(CutoffMethod m) noexcept;
CutoffMethod parse_cutoff_method(std::string_view text);

struct ScreeParams {
  /// What to do when no candidate reaches the target accuracy.
  enum class Fallback {
    max_candidate,  // largest candidate index
    best_accuracy,  // candidate with the highest accuracy
  };

  int top_k = 3;
  double target_accuracy = 1.0;
  double denom_epsilon = 1e-12;
  Fallback fallback = Fallback::max_candidate;
};

struct XMeansParams {
  int k_init = 1;
  int k_max = 0;  // 0 -> ceil(|C| / 2)
  double target_accuracy = 1.0;
  std::uint64_t rng_seed = 0;
};

struct PermutationParams {
  int permutations = 100;
  double significance = 0.05;
  std::uint64_t rng_seed = 0;
};

struct CutoffCandidate {
  int index = 0;  // number of leading ordered features retained
  double accuracy = 0.0;
};

struct CutoffResult {
  std::vector<int> selected;  // feature indices kept, in CMI order
  int cutoff_index = 0;       // |selected|
  std::vector<CutoffCandidate> candidates;
  bool evaluated = false;       // at least one trial evaluation ran
  bool met_target = false;      // the committed selection reached the target
  bool fallback = false;        // no candidate reached the target
  bool too_few_values = false;  // scree on |C| < 3
  std::optional<double> accuracy;  // accuracy of the committed selection, if measured
  int clusters = 0;                // X-Means cluster count
  std::vector<double> slopes;      // QDA slopes (scree only)
};

/// s(i) = (c_i - c_{i+1}) / max(c_{i+1} - c_{i+2}, eps) for i = 1..|C|-2.
std::vector<double> qda_slopes(std::span<const double> cmi, double denom_epsilon);

CutoffResult scree_cutoff(const OrderedLayer& ordered, const ScreeParams& params,
                          const TrialEvaluator& eval);

struct Clustering {
  std::vector<int> assignment;  // cluster id per value
  std::vector<double> centers;
  std::vector<double> variances;
  bool degenerate_variance = false;  // the 1e-12 floor was applied somewhere
};

/// 1-D X-Means: k-means++ / Lloyd refinement with recursive two-way splits
/// kept whenever the children's BIC beats the parent's.
Clustering xmeans_1d(std::span<const double> values, int k_init, int k_max, std::uint64_t seed);

/// BIC = L(D) - p/2 log R for a 1-D spherical Gaussian mixture, p = 2k.
double bic_1d(std::span<const double> values, std::span<const int> assignment,
              std::span<const double> centers, int k);

CutoffResult xmeans_cutoff(const OrderedLayer& ordered, const XMeansParams& params,
                           const TrialEvaluator& eval);

enum class PermutationDecision { continue_selection, stop };

struct PermutationOutcome {
  PermutationDecision decision = PermutationDecision::stop;
  int retained_count = 0;   // |F^s| after this step
  double baseline = 0.0;    // I(F^r - f; Y | F^s, f)
  double fraction = 0.0;    // share of trials with baseline >= permuted
};

/// One step of the permutation test: f = remaining.front() is tested against
/// `permutations` row shuffles of its own samples. A fraction <= significance
/// accepts f (continue); otherwise selection stops at |selected|.
PermutationOutcome permutation_cutoff(std::span<const NormalizedKernel> selected,
                                      std::span<const NormalizedKernel> remaining,
                                      const NormalizedKernel& y_kernel,
                                      const PermutationParams& params, EntropyOrder order,
                                      std::uint64_t stream = 0);

/// Runs permutation_cutoff along the whole CMI order until it stops.
CutoffResult permutation_select(const OrderedLayer& ordered,
                                std::span<const NormalizedKernel> feature_kernels,
                                const NormalizedKernel& y_kernel, const PermutationParams& params,
                                EntropyOrder order);

}  // namespace cmiprune
