#pragma once

#include "cmiprune/entropy.hpp"
#include "cmiprune/error.hpp"
#include "cmiprune/feature_ordering.hpp"
#include "cmiprune/model.hpp"
#include "oracle.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <random>
#include <vector>

namespace support {

/// Code of the cmiprune::Error thrown by f, or nullopt when nothing is thrown.
template <typename F>
std::optional<cmiprune::ErrorCode> error_code(F&& f) {
  try {
    f();
  } catch (const cmiprune::Error& e) {
    return e.code();
  }
  return std::nullopt;
}

inline std::vector<std::vector<double>> rows(const cmiprune::Matrix& m) {
  std::vector<std::vector<double>> out(static_cast<std::size_t>(m.rows()));
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) out[static_cast<std::size_t>(i)].push_back(m(i, j));
  }
  return out;
}

inline oracle::Mat to_oracle(const cmiprune::NormalizedKernel& g) {
  return rows(g.matrix());
}

inline cmiprune::FeatureMatrix label_features(const std::vector<int>& labels) {
  cmiprune::FeatureMatrix fm;
  fm.data.resize(static_cast<Eigen::Index>(labels.size()), 1);
  for (std::size_t i = 0; i < labels.size(); ++i) fm.data(static_cast<Eigen::Index>(i), 0) = labels[i];
  return fm;
}

inline cmiprune::NormalizedKernel delta(const std::vector<int>& labels) {
  return cmiprune::label_kernel(labels);
}

inline std::vector<int> random_labels(std::mt19937_64& rng, int n, int classes) {
  std::uniform_int_distribution<int> pick(0, classes - 1);
  std::vector<int> out(static_cast<std::size_t>(n));
  for (int& v : out) v = pick(rng);
  return out;
}

/// Features that mix the label signal with noise at random strengths, so
/// that orderings are non-trivial.
inline cmiprune::LayerFeatures random_layer(std::mt19937_64& rng, int features, int n, int d,
                                            const std::vector<int>& labels) {
  std::normal_distribution<double> noise(0.0, 1.0);
  std::uniform_real_distribution<double> strength(0.0, 2.0);
  cmiprune::LayerFeatures layer;
  layer.layer_id = 1;
  layer.height = 1;
  layer.width = d;
  for (int f = 0; f < features; ++f) {
    cmiprune::FeatureMatrix fm;
    fm.layer_id = 1;
    fm.feature_index = f;
    fm.data.resize(n, d);
    const double s = strength(rng);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < d; ++j) {
        fm.data(i, j) = s * labels[static_cast<std::size_t>(i)] * ((j % 2) ? 1.0 : -0.5) + noise(rng);
      }
    }
    layer.features.push_back(std::move(fm));
  }
  return layer;
}

/// Small conv net (about 200 parameters) for finite-difference checks.
/// Two groups of five values around 10.0 and 0.1, each spread over +-0.05
/// on a jittered grid, sorted in decreasing order.
inline std::vector<double> bimodal_cmi(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> jitter(-0.0025, 0.0025);
  std::vector<double> c;
  for (double center : {10.0, 0.1}) {
    for (int i = 0; i < 5; ++i) c.push_back(center - 0.05 + 0.025 * i + jitter(rng));
  }
  std::sort(c.rbegin(), c.rend());
  return c;
}

inline cmiprune::ToyModel tiny_model(std::uint64_t seed, bool batch_norm) {
  cmiprune::ToyArchitecture arch;
  arch.input_channels = 1;
  arch.height = 8;
  arch.width = 8;
  arch.num_classes = 3;
  arch.batch_norm = batch_norm;
  arch.layers = {{2, true}, {3, false}};
  return cmiprune::make_toy_model(arch, seed);
}

struct GradientCheck {
  double max_relative_error = 0.0;
  std::size_t parameters = 0;
};

/// Central differences on every trainable parameter. The relative error of
/// each entry is |a - n| / max(|a|, |n|, 1e-6); the floor sits above the
/// roundoff of a difference quotient with step 1e-5.
inline GradientCheck gradient_check(std::uint64_t seed, bool batch_norm) {
  const cmiprune::ToyModel model = tiny_model(seed, batch_norm);
  std::mt19937_64 rng(seed ^ 0xABCDEFULL);
  std::normal_distribution<double> pixel(0.0, 1.0);
  cmiprune::Tensor4 images(6, 1, 8, 8);
  for (double& v : images.data) v = pixel(rng);
  const std::vector<int> labels = {0, 1, 2, 0, 1, 2};

  const auto analytic = cmiprune::flatten_parameters(cmiprune::loss_and_gradients(model, images, labels).gradients);
  std::vector<double> params = cmiprune::flatten_parameters(model);
  GradientCheck out;
  out.parameters = params.size();
  const double h = 1e-5;
  cmiprune::ToyModel probe = model;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double saved = params[i];
    params[i] = saved + h;
    cmiprune::assign_parameters(probe, params);
    const double up = cmiprune::loss_and_gradients(probe, images, labels).loss;
    params[i] = saved - h;
    cmiprune::assign_parameters(probe, params);
    const double down = cmiprune::loss_and_gradients(probe, images, labels).loss;
    params[i] = saved;
    const double numeric = (up - down) / (2.0 * h);
    const double scale = std::max({std::abs(analytic[i]), std::abs(numeric), 1e-6});
    out.max_relative_error = std::max(out.max_relative_error, std::abs(analytic[i] - numeric) / scale);
  }
  return out;
}

}  // namespace support
