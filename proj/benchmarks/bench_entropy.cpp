#include "cmiprune/entropy.hpp"
#include "cmiprune/feature_ordering.hpp"

#include <benchmark/benchmark.h>

#include <random>

using namespace cmiprune;

namespace {

LayerFeatures synthetic_layer(int features, int n, int d, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  LayerFeatures layer;
  layer.layer_id = 1;
  layer.height = 1;
  layer.width = d;
  for (int f = 0; f < features; ++f) {
    FeatureMatrix fm;
    fm.data = Matrix::NullaryExpr(n, d, [&] { return g(rng); });
    fm.feature_index = f;
    layer.features.push_back(std::move(fm));
  }
  return layer;
}

std::vector<int> labels_for(int n) {
  std::vector<int> y(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) y[static_cast<std::size_t>(i)] = i % 4;
  return y;
}

void BM_BuildKernel(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const LayerFeatures layer = synthetic_layer(1, n, 64, 1);
  for (auto _ : state) benchmark::DoNotOptimize(build_kernel(layer.features[0], KernelSpec::rbf_median()));
  state.SetComplexityN(n);
}
BENCHMARK(BM_BuildKernel)->RangeMultiplier(2)->Range(32, 256)->Complexity();

void BM_RenyiEntropy(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const auto g = build_kernel(synthetic_layer(1, n, 16, 2).features[0], KernelSpec::rbf_median());
  for (auto _ : state) benchmark::DoNotOptimize(renyi_entropy(g, EntropyOrder()));
  state.SetComplexityN(n);
}
BENCHMARK(BM_RenyiEntropy)->RangeMultiplier(2)->Range(32, 256)->Complexity();

void BM_OrderLayer(benchmark::State& state) {
  const int features = static_cast<int>(state.range(0));
  const int n = static_cast<int>(state.range(1));
  const KernelList ks = build_layer_kernels(synthetic_layer(features, n, 16, 3), KernelSpec::rbf_median());
  const auto y = label_kernel(labels_for(n));
  for (auto _ : state) {
    benchmark::DoNotOptimize(order_layer(ks, y, ConditioningContext::per_layer(), EntropyOrder()));
  }
}
BENCHMARK(BM_OrderLayer)->Args({8, 64})->Args({16, 64})->Args({16, 128})->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
