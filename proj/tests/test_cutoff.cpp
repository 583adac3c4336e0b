#include "cmiprune/cutoff.hpp"
#include "cmiprune/error.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

using namespace cmiprune;
using support::error_code;

namespace {

OrderedLayer ordered_from(std::vector<double> cmi, int layer_id = 3) {
  OrderedLayer o;
  o.layer_id = layer_id;
  o.cmi_values = std::move(cmi);
  o.order.resize(o.cmi_values.size());
  // A non-identity order so prefix handling is visible.
  std::iota(o.order.rbegin(), o.order.rend(), 0);
  return o;
}

struct CountingEvaluator {
  std::vector<int> seen_sizes;
  std::function<double(int)> accuracy_for_size;

  TrialEvaluator fn(int expected_layer) {
    return [this, expected_layer](int layer, std::span<const int> retained) {
      EXPECT_EQ(layer, expected_layer);
      seen_sizes.push_back(static_cast<int>(retained.size()));
      return accuracy_for_size(static_cast<int>(retained.size()));
    };
  }
};

std::vector<double> bimodal(std::uint64_t seed) { return support::bimodal_cmi(seed); }

}  // namespace

TEST(QdaSlopes, HandComputed) {
  const std::vector<double> c = {5.0, 3.0, 2.0, 1.9, 1.8};
  const auto s = qda_slopes(c, 1e-12);
  ASSERT_EQ(s.size(), 3u);
  EXPECT_NEAR(s[0], 2.0, 1e-12);
  EXPECT_NEAR(s[1], 10.0, 1e-9);
  EXPECT_NEAR(s[2], 1.0, 1e-9);
}

TEST(QdaSlopes, FlatTailUsesEpsilon) {
  const std::vector<double> c = {1.0, 0.5, 0.5};
  const auto s = qda_slopes(c, 1e-12);
  ASSERT_EQ(s.size(), 1u);
  EXPECT_DOUBLE_EQ(s[0], 0.5 / 1e-12);
}

TEST(Scree, SingleCandidateTakesSteepestSlope) {
  CountingEvaluator ev{{}, [](int) { return 1.0; }};
  ScreeParams p;
  p.top_k = 1;
  const auto o = ordered_from({5.0, 3.0, 2.0, 1.9, 1.8});
  const auto r = scree_cutoff(o, p, ev.fn(3));
  EXPECT_EQ(r.cutoff_index, 2);
  EXPECT_EQ(r.selected, (std::vector<int>{4, 3}));
  EXPECT_TRUE(ev.seen_sizes.empty());
  EXPECT_FALSE(r.evaluated);
  EXPECT_FALSE(r.too_few_values);
}

TEST(Scree, GeometricTiesToFirstIndex) {
  std::vector<double> c;
  for (int i = 1; i <= 8; ++i) c.push_back(std::pow(2.0, -i));
  ScreeParams p;
  p.top_k = 1;
  const auto r = scree_cutoff(ordered_from(c), p, {});
  EXPECT_EQ(r.cutoff_index, 1);
  for (double s : r.slopes) EXPECT_NEAR(s, 2.0, 1e-9);
}

TEST(Scree, TooFewValuesKeepsEverything) {
  for (int len : {1, 2}) {
    std::vector<double> c(static_cast<std::size_t>(len), 0.0);
    if (len == 2) c[0] = 1.0;
    CountingEvaluator ev{{}, [](int) { return 0.0; }};
    const auto r = scree_cutoff(ordered_from(c), ScreeParams{}, ev.fn(3));
    EXPECT_TRUE(r.too_few_values);
    EXPECT_EQ(r.cutoff_index, len);
    EXPECT_EQ(r.selected.size(), static_cast<std::size_t>(len));
    EXPECT_TRUE(ev.seen_sizes.empty());
  }
}

TEST(Scree, SmallestCandidateMeetingTarget) {
  CountingEvaluator ev{{}, [](int size) { return size / 5.0; }};
  ScreeParams p;
  p.top_k = 3;
  p.target_accuracy = 0.5;
  const auto r = scree_cutoff(ordered_from({5.0, 3.0, 2.0, 1.9, 1.8}), p, ev.fn(3));
  EXPECT_EQ(r.cutoff_index, 3);
  EXPECT_TRUE(r.met_target);
  EXPECT_FALSE(r.fallback);
  ASSERT_TRUE(r.accuracy.has_value());
  EXPECT_DOUBLE_EQ(*r.accuracy, 0.6);
  EXPECT_EQ(r.candidates.size(), 3u);
}

TEST(Scree, FallbackIsLargestCandidate) {
  CountingEvaluator ev{{}, [](int size) { return size == 1 ? 0.8 : 0.1; }};
  ScreeParams p;
  p.top_k = 2;
  p.target_accuracy = 0.99;
  const auto r = scree_cutoff(ordered_from({5.0, 3.0, 2.0, 1.9, 1.8}), p, ev.fn(3));
  EXPECT_TRUE(r.fallback);
  EXPECT_FALSE(r.met_target);
  EXPECT_EQ(r.cutoff_index, 2);  // candidates {2, 1}
  p.fallback = ScreeParams::Fallback::best_accuracy;
  const auto best = scree_cutoff(ordered_from({5.0, 3.0, 2.0, 1.9, 1.8}), p, ev.fn(3));
  EXPECT_EQ(best.cutoff_index, 1);
}

TEST(Scree, CandidateCountIsBoundedByLength) {
  CountingEvaluator ev{{}, [](int) { return 0.0; }};
  ScreeParams p;
  p.top_k = 10;
  const auto r = scree_cutoff(ordered_from({6.0, 5.0, 3.0, 2.5, 1.0, 0.0}), p, ev.fn(3));
  EXPECT_EQ(ev.seen_sizes.size(), 4u);
  EXPECT_EQ(r.candidates.size(), 4u);
}

TEST(Scree, Deterministic) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> c(30);
  for (double& v : c) v = u(rng);
  std::sort(c.rbegin(), c.rend());
  ScreeParams p;
  p.top_k = 1;
  EXPECT_EQ(scree_cutoff(ordered_from(c), p, {}).cutoff_index, scree_cutoff(ordered_from(c), p, {}).cutoff_index);
}

TEST(Scree, EvaluatorErrors) {
  ScreeParams p;
  p.top_k = 2;
  const auto o = ordered_from({5.0, 3.0, 2.0, 1.9, 1.8});
  EXPECT_EQ(error_code([&] { scree_cutoff(o, p, {}); }), ErrorCode::EvaluatorFailure);
  EXPECT_EQ(error_code([&] { scree_cutoff(o, p, [](int, std::span<const int>) { return 1.5; }); }),
            ErrorCode::EvaluatorFailure);
  EXPECT_EQ(error_code([&] {
              scree_cutoff(o, p, [](int, std::span<const int>) -> double { throw std::runtime_error("boom"); });
            }),
            ErrorCode::EvaluatorFailure);
  p.top_k = 0;
  EXPECT_EQ(error_code([&] { scree_cutoff(o, p, {}); }), ErrorCode::InvalidArgument);
}

TEST(XMeans, BimodalRecoversTwoClusters) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto c = bimodal(seed);
    const auto clustering = xmeans_1d(c, 1, 5, seed);
    EXPECT_EQ(clustering.centers.size(), 2u) << "seed " << seed;
    CountingEvaluator ev{{}, [](int size) { return size >= 5 ? 1.0 : 0.0; }};
    XMeansParams p;
    p.rng_seed = seed;
    const auto o = ordered_from(c);
    const auto r = xmeans_cutoff(o, p, ev.fn(3));
    EXPECT_EQ(r.clusters, 2);
    EXPECT_EQ(r.selected, std::vector<int>(o.order.begin(), o.order.begin() + 5));
    EXPECT_TRUE(r.met_target);
  }
}

TEST(XMeans, ConstantValuesStayOneCluster) {
  const std::vector<double> c(8, 0.7);
  CountingEvaluator ev{{}, [](int) { return 1.0; }};
  const auto r = xmeans_cutoff(ordered_from(c), XMeansParams{}, ev.fn(3));
  EXPECT_EQ(r.clusters, 1);
  EXPECT_EQ(r.cutoff_index, 8);
}

TEST(XMeans, UnreachableTargetKeepsAll) {
  CountingEvaluator ev{{}, [](int) { return 0.0; }};
  const auto o = ordered_from(bimodal(4));
  const auto r = xmeans_cutoff(o, XMeansParams{}, ev.fn(3));
  EXPECT_TRUE(r.fallback);
  EXPECT_EQ(r.selected, o.order);
  EXPECT_EQ(ev.seen_sizes, (std::vector<int>{5, 10}));
}

TEST(XMeans, DeterministicUnderSeed) {
  std::mt19937_64 rng(9);
  std::exponential_distribution<double> e(1.0);
  std::vector<double> c(24);
  for (double& v : c) v = e(rng);
  std::sort(c.rbegin(), c.rend());
  const auto a = xmeans_1d(c, 1, 12, 42);
  const auto b = xmeans_1d(c, 1, 12, 42);
  EXPECT_EQ(a.assignment, b.assignment);
  EXPECT_EQ(a.centers, b.centers);
}

TEST(XMeans, BicMatchesClosedForm) {
  const std::vector<double> v = {0.0, 1.0, 2.0, 10.0, 12.0};
  const std::vector<int> a = {0, 0, 0, 1, 1};
  const std::vector<double> centers = {1.0, 11.0};
  const double var = 4.0 / 3.0;  // pooled, R - k degrees of freedom
  const double ll = 3 * std::log(3.0 / 5.0) + 2 * std::log(2.0 / 5.0) - 2.5 * std::log(2 * M_PI * var) - 4.0 / (2 * var);
  EXPECT_NEAR(bic_1d(v, a, centers, 2), ll - 2.0 * std::log(5.0), 1e-12);
}

TEST(XMeans, SplitsOnlyWhenBicImproves) {
  const std::vector<double> two = {5.0, 5.01, 4.99, 0.02, 0.0, 0.01};
  EXPECT_EQ(xmeans_1d(two, 1, 3, 1).centers.size(), 2u);
  const std::vector<double> spread = {1.0, 0.9, 0.8, 0.7, 0.6, 0.5, 0.4, 0.3};
  EXPECT_EQ(xmeans_1d(spread, 1, 4, 1).centers.size(), 1u);
}

TEST(XMeans, Validation) {
  const auto o = ordered_from({3.0, 2.0, 1.0});
  XMeansParams p;
  p.k_max = 4;
  EXPECT_EQ(error_code([&] { xmeans_cutoff(o, p, [](int, std::span<const int>) { return 1.0; }); }),
            ErrorCode::InvalidArgument);
  EXPECT_EQ(error_code([&] { xmeans_cutoff(ordered_from({}), XMeansParams{}, {}); }), ErrorCode::EmptyLayer);
}

TEST(Permutation, ConstantCandidateStops) {
  const std::vector<int> labels = {0, 1, 1, 0, 2, 2, 0, 1};
  const auto y = support::delta(labels);
  const KernelList remaining = {NormalizedKernel::constant(8), support::delta({0, 1, 1, 0, 0, 1, 0, 1})};
  PermutationParams p;
  p.permutations = 20;
  const auto out = permutation_cutoff({}, remaining, y, p, EntropyOrder());
  EXPECT_EQ(out.decision, PermutationDecision::stop);
  EXPECT_DOUBLE_EQ(out.fraction, 1.0);
  EXPECT_EQ(out.retained_count, 0);
}

TEST(Permutation, SingleTrialThresholdContract) {
  std::mt19937_64 rng(3);
  const auto labels = support::random_labels(rng, 16, 2);
  const auto layer = support::random_layer(rng, 4, 16, 2, labels);
  const KernelList ks = build_layer_kernels(layer, KernelSpec::rbf_median());
  const auto y = support::delta(labels);
  PermutationParams p;
  p.permutations = 1;
  p.significance = 0.999;
  int continues = 0;
  for (std::uint64_t seed = 0; seed < 16; ++seed) {
    p.rng_seed = seed;
    const auto out = permutation_cutoff(std::span(ks).first(1), std::span(ks).subspan(1), y, p, EntropyOrder());
    EXPECT_TRUE(out.fraction == 0.0 || out.fraction == 1.0);
    if (out.fraction == 0.0) {
      EXPECT_EQ(out.decision, PermutationDecision::continue_selection);
      EXPECT_EQ(out.retained_count, 2);
      ++continues;
    } else {
      EXPECT_EQ(out.decision, PermutationDecision::stop);
      EXPECT_EQ(out.retained_count, 1);
    }
  }
  SUCCEED() << continues << " of 16 trials accepted";
}

TEST(Permutation, Validation) {
  const auto y = support::delta({0, 1, 0, 1});
  const KernelList one = {NormalizedKernel::constant(4)};
  PermutationParams p;
  p.permutations = 0;
  EXPECT_EQ(error_code([&] { permutation_cutoff({}, one, y, p, EntropyOrder()); }), ErrorCode::InvalidArgument);
  EXPECT_EQ(error_code([&] { permutation_cutoff({}, {}, y, PermutationParams{}, EntropyOrder()); }),
            ErrorCode::EmptyRemaining);
}

TEST(Permutation, SelectionIsPrefixAndDeterministic) {
  std::mt19937_64 rng(8);
  const auto labels = support::random_labels(rng, 20, 3);
  const auto layer = support::random_layer(rng, 6, 20, 2, labels);
  const KernelList ks = build_layer_kernels(layer, KernelSpec::rbf_median());
  const auto y = support::delta(labels);
  const auto ordered = order_layer(ks, y, ConditioningContext::per_layer(), EntropyOrder());
  PermutationParams p;
  p.permutations = 30;
  p.rng_seed = 5;
  const auto a = permutation_select(ordered, ks, y, p, EntropyOrder());
  const auto b = permutation_select(ordered, ks, y, p, EntropyOrder());
  EXPECT_EQ(a.selected, b.selected);
  ASSERT_LE(a.cutoff_index, 6);
  EXPECT_EQ(a.selected, std::vector<int>(ordered.order.begin(), ordered.order.begin() + a.cutoff_index));
}

TEST(CutoffMethod, Parsing) {
  EXPECT_EQ(parse_cutoff_method("scree"), CutoffMethod::scree);
  EXPECT_EQ(parse_cutoff_method("xmeans"), CutoffMethod::xmeans);
  EXPECT_EQ(parse_cutoff_method("permutation"), CutoffMethod::permutation);
  EXPECT_EQ(error_code([] { (void)parse_cutoff_method("elbow"); }), ErrorCode::ConfigInvalid);
}
