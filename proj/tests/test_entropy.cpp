#include "cmiprune/entropy.hpp"
#include "cmiprune/error.hpp"
#include "cmiprune/feature_ordering.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace cmiprune;

namespace {

FeatureMatrix rows_of(std::initializer_list<std::initializer_list<double>> values) {
  FeatureMatrix fm;
  fm.data.resize(static_cast<Eigen::Index>(values.size()),
                 static_cast<Eigen::Index>(values.begin()->size()));
  Eigen::Index i = 0;
  for (const auto& row : values) {
    Eigen::Index j = 0;
    for (double v : row) fm.data(i, j++) = v;
    ++i;
  }
  return fm;
}

template <typename F>
ErrorCode code_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return static_cast<ErrorCode>(-1);
}

}  // namespace

TEST(BuildKernel, IdenticalRowsGiveUniformKernel) {
  const auto g = build_kernel(rows_of({{0.3, -1.0}, {0.3, -1.0}, {0.3, -1.0}}), KernelSpec::rbf_fixed(0.7));
  for (Eigen::Index i = 0; i < 3; ++i) {
    for (Eigen::Index j = 0; j < 3; ++j) EXPECT_DOUBLE_EQ(g(i, j), 1.0 / 3.0);
  }
  const auto m = build_kernel(rows_of({{2.0}, {2.0}, {2.0}}), KernelSpec::rbf_median());
  EXPECT_DOUBLE_EQ(m(0, 2), 1.0 / 3.0);
}

TEST(BuildKernel, DeltaKernelIsBlockDiagonal) {
  const auto g = build_kernel(support::label_features({0, 0, 0, 1}), KernelSpec::delta());
  for (Eigen::Index i = 0; i < 4; ++i) {
    for (Eigen::Index j = 0; j < 4; ++j) {
      const bool same = (i < 3) == (j < 3);
      EXPECT_DOUBLE_EQ(g(i, j), same ? 0.25 : 0.0);
    }
  }
  EXPECT_NEAR(g.matrix().trace(), 1.0, 1e-12);
}

TEST(BuildKernel, OffDiagonalAtDistanceSigmaRootTwo) {
  const double sigma = 1.7;
  const double z = sigma * std::sqrt(2.0);
  const auto g = build_kernel(rows_of({{0.0, 0.0}, {z / std::sqrt(2.0), z / std::sqrt(2.0)}}),
                              KernelSpec::rbf_fixed(sigma));
  EXPECT_NEAR(g(0, 1), std::exp(-1.0) / 2.0, 1e-12);
  EXPECT_NEAR(g(0, 1), 0.18394, 1e-5);
}

TEST(BuildKernel, NormalizationInvariants) {
  std::mt19937_64 rng(3);
  const auto labels = support::random_labels(rng, 20, 3);
  const auto layer = support::random_layer(rng, 3, 20, 5, labels);
  const KernelList ks = build_layer_kernels(layer, KernelSpec::rbf_median());
  ASSERT_EQ(ks.size(), 3u);
  for (const auto& g : ks) {
    EXPECT_NEAR(g.matrix().trace(), 1.0, 1e-12);
    EXPECT_NEAR((g.matrix() - g.matrix().transpose()).cwiseAbs().maxCoeff(), 0.0, 1e-12);
    for (Eigen::Index i = 0; i < g.size(); ++i) EXPECT_NEAR(g(i, i), 1.0 / 20.0, 1e-12);
    const auto again = NormalizedKernel::from_gram(g.matrix());
    EXPECT_NEAR((again.matrix() - g.matrix()).cwiseAbs().maxCoeff(), 0.0, 1e-12);
  }
}

TEST(BuildKernel, MedianHeuristicMatchesOracle) {
  std::mt19937_64 rng(11);
  const auto labels = support::random_labels(rng, 15, 2);
  const auto layer = support::random_layer(rng, 1, 15, 4, labels);
  const auto x = support::rows(layer.features[0].data);
  const double sigma = oracle::median_distance(x);
  EXPECT_NEAR(median_pairwise_distance(layer.features[0].data), sigma, 1e-12);
  const auto g = build_kernel(layer.features[0], KernelSpec::rbf_median());
  const auto ref = oracle::rbf_gram(x, sigma);
  for (Eigen::Index i = 0; i < 15; ++i) {
    for (Eigen::Index j = 0; j < 15; ++j) {
      EXPECT_NEAR(g(i, j), ref[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)], 1e-14);
    }
  }
}

TEST(BuildKernel, Errors) {
  EXPECT_EQ(code_of([] { build_kernel(rows_of({{1.0}, {NAN}}), KernelSpec::rbf_median()); }),
            ErrorCode::NonFiniteInput);
  EXPECT_EQ(code_of([] { build_kernel(rows_of({{1.0}}), KernelSpec::rbf_median()); }),
            ErrorCode::InvalidArgument);
  EXPECT_EQ(code_of([] { build_kernel(rows_of({{0.5}, {1.0}}), KernelSpec::delta()); }),
            ErrorCode::InvalidArgument);
  EXPECT_EQ(code_of([] { build_kernel(rows_of({{0.0, 1.0}, {1.0, 0.0}}), KernelSpec::delta()); }),
            ErrorCode::InvalidArgument);
  EXPECT_EQ(code_of([] { (void)KernelSpec::rbf_fixed(0.0); }), ErrorCode::InvalidArgument);
  Matrix bad = Matrix::Identity(3, 3);
  bad(1, 1) = 0.0;
  EXPECT_EQ(code_of([&] { (void)NormalizedKernel::from_gram(bad); }), ErrorCode::ZeroDiagonal);
}

TEST(EntropyOrder, Validation) {
  EXPECT_EQ(code_of([] { EntropyOrder(0.0); }), ErrorCode::InvalidArgument);
  EXPECT_EQ(code_of([] { EntropyOrder(-1.0); }), ErrorCode::InvalidArgument);
  EXPECT_EQ(code_of([] { EntropyOrder(1.0 + 1e-7); }), ErrorCode::InvalidArgument);
  EXPECT_DOUBLE_EQ(EntropyOrder().alpha(), 1.01);
}

TEST(RenyiEntropy, ScaledIdentityAndRankOne) {
  EXPECT_NEAR(renyi_entropy(NormalizedKernel::scaled_identity(4), EntropyOrder(2.0)), 2.0, 1e-12);
  EXPECT_NEAR(renyi_entropy(NormalizedKernel::constant(4), EntropyOrder(2.0)), 0.0, 1e-12);
  for (int n : {2, 4, 16, 64}) {
    for (double a : {0.5, 1.01, 2.0, 3.0}) {
      EXPECT_NEAR(renyi_entropy(NormalizedKernel::scaled_identity(n), EntropyOrder(a)), std::log2(n), 1e-9);
      EXPECT_NEAR(renyi_entropy(NormalizedKernel::constant(n), EntropyOrder(a)), 0.0, 1e-9);
    }
  }
}

TEST(RenyiEntropy, DeltaKernelOfThreeToOne) {
  const auto g = support::delta({0, 0, 0, 1});
  EXPECT_NEAR(renyi_entropy(g, EntropyOrder(2.0)), -std::log2(0.75 * 0.75 + 0.25 * 0.25), 1e-12);
  EXPECT_NEAR(renyi_entropy(g, EntropyOrder(2.0)), 0.678, 5e-4);
}

TEST(RenyiEntropy, MatchesJacobiOracleAndBounds) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 4 + trial;
    const auto labels = support::random_labels(rng, n, 3);
    const auto layer = support::random_layer(rng, 1, n, 3, labels);
    const auto g = build_kernel(layer.features[0], KernelSpec::rbf_median());
    for (double a : {0.5, 1.01, 2.0}) {
      const double s = renyi_entropy(g, EntropyOrder(a));
      EXPECT_NEAR(s, oracle::entropy(support::to_oracle(g), a), 1e-9);
      EXPECT_GE(s, -1e-9);
      EXPECT_LE(s, std::log2(n) + 1e-9);
    }
    const auto spectrum = eigen_spectrum(g);
    EXPECT_TRUE(std::is_sorted(spectrum.rbegin(), spectrum.rend()));
    double sum = 0.0;
    for (double l : spectrum) {
      EXPECT_GE(l, 0.0);
      EXPECT_LE(l, 1.0);
      sum += l;
    }
    EXPECT_NEAR(sum, 1.0, 1e-9);
  }
}

TEST(RenyiEntropy, DeltaOracleAndShannonLimit) {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 60; ++trial) {
    const int n = 2 + static_cast<int>(rng() % 127);
    const int classes = 1 + static_cast<int>(rng() % 8);
    const auto labels = support::random_labels(rng, n, classes);
    const auto g = support::delta(labels);
    for (double a : {0.5, 1.01, 2.0, 3.0}) {
      EXPECT_NEAR(renyi_entropy(g, EntropyOrder(a)), oracle::label_entropy(labels, a), 1e-8);
    }
    EXPECT_NEAR(renyi_entropy(g, EntropyOrder(1.01)), oracle::shannon(labels), 0.02);
  }
}

TEST(RenyiEntropy, NegativeSpectrumRejected) {
  Matrix m(2, 2);
  m << 0.5, 0.6, 0.6, 0.5;  // eigenvalues 1.1 and -0.1
  const auto g = NormalizedKernel::from_gram(m);
  EXPECT_EQ(code_of([&] { (void)renyi_entropy(g, EntropyOrder()); }), ErrorCode::NegativeSpectrum);
}

TEST(JointEntropy, SingleKernelPassthrough) {
  const auto g = support::delta({0, 1, 1, 2, 2, 2});
  const KernelList one = {g};
  EXPECT_EQ(joint_entropy(one, EntropyOrder(2.0)), renyi_entropy(g, EntropyOrder(2.0)));
}

TEST(JointEntropy, DeltaWithItself) {
  const auto g = support::delta({0, 0, 1, 1});
  const KernelList two = {g, g};
  EXPECT_NEAR(joint_entropy(two, EntropyOrder(2.0)), renyi_entropy(g, EntropyOrder(2.0)), 1e-12);
}

TEST(JointEntropy, WithScaledIdentityIsLogN) {
  std::mt19937_64 rng(2);
  const auto labels = support::random_labels(rng, 12, 3);
  const auto layer = support::random_layer(rng, 1, 12, 4, labels);
  const KernelList ks = {build_kernel(layer.features[0], KernelSpec::rbf_median()),
                         NormalizedKernel::scaled_identity(12)};
  for (double a : {0.5, 1.01, 2.0}) EXPECT_NEAR(joint_entropy(ks, EntropyOrder(a)), std::log2(12.0), 1e-9);
}

TEST(JointEntropy, OrderInvariantAndMatchesOracle) {
  std::mt19937_64 rng(9);
  const auto labels = support::random_labels(rng, 16, 3);
  const auto layer = support::random_layer(rng, 4, 16, 3, labels);
  const KernelList ks = build_layer_kernels(layer, KernelSpec::rbf_median());
  KernelList reversed(ks.rbegin(), ks.rend());
  const EntropyOrder order(1.01);
  EXPECT_NEAR(joint_entropy(ks, order), joint_entropy(reversed, order), 1e-12);
  std::vector<oracle::Mat> ref;
  for (const auto& g : ks) ref.push_back(support::to_oracle(g));
  EXPECT_NEAR(joint_entropy(ks, order), oracle::joint_entropy(ref, 1.01), 1e-9);
}

TEST(JointEntropy, DimensionMismatch) {
  const KernelList ks = {NormalizedKernel::constant(3), NormalizedKernel::constant(4)};
  EXPECT_EQ(code_of([&] { (void)joint_entropy(ks, EntropyOrder()); }), ErrorCode::DimensionMismatch);
}

TEST(JointEntropy, LongProductsDoNotUnderflow) {
  std::mt19937_64 rng(4);
  const auto labels = support::random_labels(rng, 64, 4);
  const auto layer = support::random_layer(rng, 1, 64, 2, labels);
  const auto g = build_kernel(layer.features[0], KernelSpec::rbf_median());
  const KernelList many(400, NormalizedKernel::constant(64));
  KernelList with_g = many;
  with_g.push_back(g);
  EXPECT_NEAR(joint_entropy(with_g, EntropyOrder()), renyi_entropy(g, EntropyOrder()), 1e-9);
}

TEST(MutualInformation, ConstantTargetCarriesNothing) {
  std::mt19937_64 rng(6);
  const auto labels = support::random_labels(rng, 10, 3);
  const auto layer = support::random_layer(rng, 1, 10, 3, labels);
  const KernelList xs = {build_kernel(layer.features[0], KernelSpec::rbf_median())};
  EXPECT_NEAR(mutual_information(NormalizedKernel::constant(10), xs, EntropyOrder()), 0.0, 1e-9);
}

TEST(MutualInformation, SelfInformationIsEntropy) {
  const auto g = support::delta({0, 0, 1, 1});
  const KernelList xs = {g};
  EXPECT_NEAR(mutual_information(g, xs, EntropyOrder(1.01)), renyi_entropy(g, EntropyOrder(1.01)), 1e-9);
  EXPECT_NEAR(mutual_information(g, xs, EntropyOrder(1.01)), 1.0, 1e-9);
}

TEST(MutualInformation, IndependentBlockKernels) {
  const KernelList xs = {support::delta({0, 0, 1, 1})};
  for (double a : {0.5, 1.01, 2.0, 3.0}) {
    EXPECT_NEAR(mutual_information(support::delta({0, 1, 0, 1}), xs, EntropyOrder(a)), 0.0, 1e-9);
  }
}

TEST(ConditionalMI, ConditioningOnTargetGivesZero) {
  const auto y = support::delta({0, 1, 1, 2, 0, 2});
  const auto x = support::delta({1, 1, 0, 0, 1, 0});
  const KernelList z = {y};
  EXPECT_NEAR(conditional_mi(x, y, z, EntropyOrder()), 0.0, 1e-9);
}

TEST(ConditionalMI, EmptyConditioningIsMutualInformation) {
  std::mt19937_64 rng(8);
  const auto labels = support::random_labels(rng, 14, 2);
  const auto layer = support::random_layer(rng, 1, 14, 3, labels);
  const auto x = build_kernel(layer.features[0], KernelSpec::rbf_median());
  const auto y = support::delta(labels);
  const KernelList none;
  const KernelList xs = {x};
  EXPECT_DOUBLE_EQ(conditional_mi(x, y, none, EntropyOrder()), mutual_information(y, xs, EntropyOrder()));
}

TEST(ConditionalMI, DuplicateOfConditioningKernel) {
  const auto y = support::delta({0, 1, 1, 0, 2, 2, 1});
  const auto x = support::delta({3, 3, 1, 1, 0, 3, 1});
  const KernelList z = {support::delta({5, 5, 5, 6, 6, 6, 7}), x};
  EXPECT_NEAR(conditional_mi(x, y, z, EntropyOrder()), 0.0, 1e-9);
}

TEST(ConditionalMI, MatchesFourTermOracle) {
  std::mt19937_64 rng(10);
  const auto labels = support::random_labels(rng, 12, 3);
  const auto layer = support::random_layer(rng, 3, 12, 2, labels);
  const KernelList ks = build_layer_kernels(layer, KernelSpec::rbf_median());
  const auto y = support::delta(labels);
  const KernelList z = {ks[1], ks[2]};
  const auto gx = support::to_oracle(ks[0]);
  const auto gy = support::to_oracle(y);
  const auto g1 = support::to_oracle(ks[1]);
  const auto g2 = support::to_oracle(ks[2]);
  const double a = 2.0;
  const double ref = oracle::joint_entropy({gx, g1, g2}, a) + oracle::joint_entropy({gy, g1, g2}, a) -
                     oracle::joint_entropy({gx, gy, g1, g2}, a) - oracle::joint_entropy({g1, g2}, a);
  EXPECT_NEAR(conditional_mi(ks[0], y, z, EntropyOrder(a)), ref, 1e-9);
}
