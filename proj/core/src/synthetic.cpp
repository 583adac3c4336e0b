#include "cmiprune/error.hpp"
#include "cmiprune/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace cmiprune {
namespace {

void draw_horizontal(Tensor4& img, int i, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> row(1, img.h - 3);
  std::uniform_int_distribution<int> len(img.w / 2, img.w - 2);
  const int r = row(rng);
  const int l = len(rng);
  const int start = std::uniform_int_distribution<int>(0, img.w - l)(rng);
  for (int x = start; x < start + l; ++x) {
    img.at(i, 0, r, x) += 1.0;
    img.at(i, 0, r + 1, x) += 1.0;
  }
}

void draw_vertical(Tensor4& img, int i, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> col(1, img.w - 3);
  std::uniform_int_distribution<int> len(img.h / 2, img.h - 2);
  const int c = col(rng);
  const int l = len(rng);
  const int start = std::uniform_int_distribution<int>(0, img.h - l)(rng);
  for (int y = start; y < start + l; ++y) {
    img.at(i, 0, y, c) += 1.0;
    img.at(i, 0, y, c + 1) += 1.0;
  }
}

void draw_diagonal(Tensor4& img, int i, std::mt19937_64& rng) {
  const int span = std::min(img.h, img.w);
  const int l = std::uniform_int_distribution<int>(span / 2, span - 2)(rng);
  const int y0 = std::uniform_int_distribution<int>(0, img.h - l)(rng);
  const int x0 = std::uniform_int_distribution<int>(0, img.w - l)(rng);
  for (int t = 0; t < l; ++t) {
    img.at(i, 0, y0 + t, x0 + t) += 1.0;
    if (x0 + t + 1 < img.w) img.at(i, 0, y0 + t, x0 + t + 1) += 1.0;
  }
}

void draw_blob(Tensor4& img, int i, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> cy(3.0, img.h - 4.0);
  std::uniform_real_distribution<double> cx(3.0, img.w - 4.0);
  std::uniform_real_distribution<double> radius(1.5, 2.5);
  const double y0 = cy(rng);
  const double x0 = cx(rng);
  const double r = radius(rng);
  for (int y = 0; y < img.h; ++y) {
    for (int x = 0; x < img.w; ++x) {
      const double d2 = (y - y0) * (y - y0) + (x - x0) * (x - x0);
      img.at(i, 0, y, x) += 1.5 * std::exp(-d2 / (2.0 * r * r));
    }
  }
}

}  // namespace

LabeledDataset make_synthetic_dataset(const SyntheticSpec& spec) {
  require(spec.num_classes >= 2 && spec.num_classes <= 4, ErrorCode::InvalidArgument,
          "synthetic data supports 2 to 4 classes");
  require(spec.samples >= 2, ErrorCode::InvalidArgument, "synthetic data needs >= 2 samples");
  require(spec.height >= 8 && spec.width >= 8, ErrorCode::InvalidArgument,
          "synthetic images must be at least 8x8");

  std::mt19937_64 rng(spec.seed);
  LabeledDataset data;
  data.num_classes = spec.num_classes;
  data.split = spec.split;
  data.images = Tensor4(spec.samples, 1, spec.height, spec.width);
  data.labels.resize(static_cast<std::size_t>(spec.samples));
  for (int i = 0; i < spec.samples; ++i) data.labels[static_cast<std::size_t>(i)] = i % spec.num_classes;
  std::shuffle(data.labels.begin(), data.labels.end(), rng);

  std::normal_distribution<double> noise(0.0, spec.noise);
  for (int i = 0; i < spec.samples; ++i) {
    switch (data.labels[static_cast<std::size_t>(i)]) {
      case 0: draw_horizontal(data.images, i, rng); break;
      case 1: draw_vertical(data.images, i, rng); break;
      case 2: draw_diagonal(data.images, i, rng); break;
      default: draw_blob(data.images, i, rng); break;
    }
    for (int y = 0; y < spec.height; ++y) {
      for (int x = 0; x < spec.width; ++x) data.images.at(i, 0, y, x) += noise(rng);
    }
  }
  return data;
}

}  // namespace cmiprune
