#pragma once

// Small CNN used as the pruning test bed: conv(3x3, same padding) ->
// [batch-norm] -> ReLU -> [2x2 max-pool] per layer, then one dense head.
// Everything runs in double precision on the CPU.

#include "cmiprune/feature_ordering.hpp"
#include "cmiprune/mask.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <optional>
#include <vector>

namespace cmiprune {

/// Dense n x c x h x w tensor, C-order.
struct Tensor4 {
  int n = 0, c = 0, h = 0, w = 0;
  std::vector<double> data;

  Tensor4() = default;
  Tensor4(int n_, int c_, int h_, int w_) : n(n_), c(c_), h(h_), w(w_), data(size_t(n_) * c_ * h_ * w_, 0.0) {}

  [[nodiscard]] std::size_t index(int i, int ch, int y, int x) const {
    return ((std::size_t(i) * c + ch) * h + y) * w + x;
  }
  double& at(int i, int ch, int y, int x) { return data[index(i, ch, y, x)]; }
  [[nodiscard]] double at(int i, int ch, int y, int x) const { return data[index(i, ch, y, x)]; }
};

enum class Split { train, test };

struct LabeledDataset {
  Tensor4 images;
  std::vector<int> labels;
  int num_classes = 0;
  Split split = Split::train;

  [[nodiscard]] int size() const noexcept { return static_cast<int>(labels.size()); }
  /// Samples [begin, begin + count).
  [[nodiscard]] LabeledDataset slice(int begin, int count) const;
  [[nodiscard]] LabeledDataset gather(std::span<const int> indices) const;
  void validate() const;
};

struct BatchNorm {
  Eigen::VectorXd gamma, beta, running_mean, running_var;
  double eps = 1e-5;
  double momentum = 0.1;
};

struct ConvLayer {
  int in_channels = 0;
  int out_channels = 0;
  int kernel = 3;
  /// out x (in * k * k); column (ci * k + ky) * k + kx.
  Matrix weight;
  Eigen::VectorXd bias;
  std::optional<BatchNorm> bn;
  bool pool_after = false;
};

struct DenseHead {
  Matrix weight;  // classes x inputs
  Eigen::VectorXd bias;
};

struct ToyModel {
  int input_channels = 1;
  int height = 16;
  int width = 16;
  std::vector<ConvLayer> conv;
  DenseHead head;

  [[nodiscard]] int num_layers() const noexcept { return static_cast<int>(conv.size()); }
  [[nodiscard]] int num_classes() const noexcept { return static_cast<int>(head.weight.rows()); }
  [[nodiscard]] std::vector<int> filters_per_layer() const;
  /// Spatial size of the activation each conv layer produces (before pooling).
  [[nodiscard]] std::pair<int, int> layer_spatial(int layer) const;
  /// Throws ShapeMismatch when consecutive shapes do not chain.
  void validate() const;
};

struct ToyArchitecture {
  struct Layer {
    int filters = 8;
    bool pool_after = false;
  };
  int input_channels = 1;
  int height = 16;
  int width = 16;
  int num_classes = 4;
  bool batch_norm = false;
  std::vector<Layer> layers;

  /// 3 conv layers of 8, 16, 16 filters with pooling after the first two.
  static ToyArchitecture reference(int num_classes = 4, bool batch_norm = false);
};

/// He-normal initialization under a fixed seed.
ToyModel make_toy_model(const ToyArchitecture& arch, std::uint64_t seed);

/// Trainable parameters only (conv, batch-norm scale/shift, dense head).
std::size_t parameter_count(const ToyModel& model);

enum class Phase { train, inference };

/// Logits, classes x batch.
Matrix forward_logits(const ToyModel& model, const Tensor4& images,
                      Phase phase = Phase::inference);

/// Post-activation map of every filter of every conv layer; rows are samples,
/// columns the row-major flattened h x w map.
std::vector<LayerFeatures> forward_extract(const ToyModel& model, const LabeledDataset& batch);

/// zero_weight: pruned filters' weights and bias set to 0, shapes and
/// batch-norm untouched. actual: pruned output channels, their batch-norm
/// entries and the matching input channels of the next conv are removed.
ToyModel apply_mask(const ToyModel& model, const MaskSet& masks, PruneMode mode);

/// Arg-max classification accuracy; ties resolve to the lowest class.
double evaluate(const ToyModel& model, const LabeledDataset& data);

struct LossAndGradients {
  double loss = 0.0;
  ToyModel gradients;  // same shapes as the model; running stats unused
};

/// Mean softmax cross-entropy and its gradient, batch-norm in training mode.
LossAndGradients loss_and_gradients(const ToyModel& model, const Tensor4& images,
                                    std::span<const int> labels);

std::vector<double> flatten_parameters(const ToyModel& model);
void assign_parameters(ToyModel& model, std::span<const double> values);

struct TrainParams {
  int epochs = 10;
  int batch_size = 32;
  double learning_rate = 0.01;
  double momentum = 0.9;
  std::uint64_t seed = 0;
  /// Filters flagged false stay at zero (zero-weight retraining).
  std::optional<MaskSet> frozen_zero;
};

struct TrainResult {
  ToyModel model;
  std::vector<double> epoch_loss;  // mean training loss per epoch
};

/// Minibatch SGD with momentum. Throws DivergenceDetected on a non-finite loss.
TrainResult train(const ToyModel& model, const LabeledDataset& data, const TrainParams& params);

struct SyntheticSpec {
  int num_classes = 4;
  int samples = 1000;
  int height = 16;
  int width = 16;
  double noise = 0.25;
  std::uint64_t seed = 0;
  Split split = Split::train;
};

/// Classes: horizontal bar, vertical bar, diagonal bar, Gaussian blob, each at
/// a random position with additive Gaussian noise. Labels are balanced.
LabeledDataset make_synthetic_dataset(const SyntheticSpec& spec);

}  // namespace cmiprune
