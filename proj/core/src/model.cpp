#include "cmiprune/model.hpp"

#include "cmiprune/error.hpp"
#include "tensor_ops.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

namespace cmiprune {
namespace {

using detail::col2im;
using detail::im2col;
using detail::max_pool2;
using detail::max_pool2_backward;

Matrix to_activation(const Tensor4& images) {
  const int hw = images.h * images.w;
  Matrix act(images.c, static_cast<Eigen::Index>(images.n) * hw);
  for (int b = 0; b < images.n; ++b) {
    for (int c = 0; c < images.c; ++c) {
      for (int p = 0; p < hw; ++p) act(c, b * hw + p) = images.data[images.index(b, c, 0, 0) + p];
    }
  }
  return act;
}

struct ConvCache {
  int h = 0, w = 0;  // input (and pre-pool output) spatial size
  Matrix cols;
  Matrix xhat;
  Eigen::VectorXd inv_std;
  Eigen::VectorXd batch_mean;
  Eigen::VectorXd batch_var;
  Matrix activated;  // post-ReLU, pre-pool
  std::vector<int> argmax;
};

struct ForwardPass {
  std::vector<ConvCache> layers;
  Matrix flat;  // features x batch
  Matrix logits;
};

ForwardPass run_forward(const ToyModel& model, const Tensor4& images, Phase phase) {
  require(images.c == model.input_channels && images.h == model.height && images.w == model.width,
          ErrorCode::ShapeMismatch, "input images do not match the model's input shape");
  const int batch = images.n;
  ForwardPass pass;
  pass.layers.resize(model.conv.size());

  Matrix act = to_activation(images);
  int h = model.height;
  int w = model.width;
  for (std::size_t l = 0; l < model.conv.size(); ++l) {
    const ConvLayer& layer = model.conv[l];
    ConvCache& cache = pass.layers[l];
    cache.h = h;
    cache.w = w;
    cache.cols = im2col(act, batch, h, w, layer.kernel);
    Matrix z = layer.weight * cache.cols;
    z.colwise() += layer.bias;

    if (layer.bn) {
      const BatchNorm& bn = *layer.bn;
      if (phase == Phase::train) {
        cache.batch_mean = z.rowwise().mean();
        cache.batch_var =
            (z.colwise() - cache.batch_mean).array().square().rowwise().mean().matrix();
      } else {
        cache.batch_mean = bn.running_mean;
        cache.batch_var = bn.running_var;
      }
      cache.inv_std = (cache.batch_var.array() + bn.eps).rsqrt().matrix();
      cache.xhat = (z.colwise() - cache.batch_mean).array().colwise() * cache.inv_std.array();
      z = (cache.xhat.array().colwise() * bn.gamma.array()).colwise() + bn.beta.array();
    }

    cache.activated = z.cwiseMax(0.0);
    if (layer.pool_after) {
      detail::PoolResult pooled = max_pool2(cache.activated, batch, h, w);
      act = std::move(pooled.output);
      cache.argmax = std::move(pooled.argmax);
      h /= 2;
      w /= 2;
    } else {
      act = cache.activated;
    }
  }

  const int hw = h * w;
  const auto channels = act.rows();
  pass.flat.resize(channels * hw, batch);
  for (int b = 0; b < batch; ++b) {
    for (Eigen::Index c = 0; c < channels; ++c) {
      for (int p = 0; p < hw; ++p) pass.flat(c * hw + p, b) = act(c, b * hw + p);
    }
  }
  pass.logits = model.head.weight * pass.flat;
  pass.logits.colwise() += model.head.bias;
  return pass;
}

ToyModel zeros_like(const ToyModel& model) {
  ToyModel g = model;
  for (auto& layer : g.conv) {
    layer.weight.setZero();
    layer.bias.setZero();
    if (layer.bn) {
      layer.bn->gamma.setZero();
      layer.bn->beta.setZero();
    }
  }
  g.head.weight.setZero();
  g.head.bias.setZero();
  return g;
}

struct BackwardResult {
  LossAndGradients lg;
  std::vector<ConvCache> caches;
};

BackwardResult forward_backward(const ToyModel& model, const Tensor4& images,
                                std::span<const int> labels) {
  require(static_cast<int>(labels.size()) == images.n, ErrorCode::ShapeMismatch,
          "label count does not match batch size");
  ForwardPass pass = run_forward(model, images, Phase::train);
  const int batch = images.n;
  const int classes = model.num_classes();

  BackwardResult out;
  out.lg.gradients = zeros_like(model);
  ToyModel& grad = out.lg.gradients;

  Matrix dlogits(classes, batch);
  double loss = 0.0;
  for (int b = 0; b < batch; ++b) {
    const auto col = pass.logits.col(b);
    const double peak = col.maxCoeff();
    const Eigen::VectorXd e = (col.array() - peak).exp().matrix();
    const double z = e.sum();
    const int y = labels[static_cast<std::size_t>(b)];
    require(y >= 0 && y < classes, ErrorCode::ShapeMismatch, "label outside the class range");
    loss += -(col(y) - peak - std::log(z));
    dlogits.col(b) = e / z;
    dlogits(y, b) -= 1.0;
  }
  out.lg.loss = loss / batch;
  dlogits /= static_cast<double>(batch);

  grad.head.weight = dlogits * pass.flat.transpose();
  grad.head.bias = dlogits.rowwise().sum();
  const Matrix dflat = model.head.weight.transpose() * dlogits;

  // Unflatten into channel-major activation layout of the last conv output.
  const ConvCache& last = pass.layers.back();
  const ConvLayer& last_layer = model.conv.back();
  const int out_h = last_layer.pool_after ? last.h / 2 : last.h;
  const int out_w = last_layer.pool_after ? last.w / 2 : last.w;
  const int out_hw = out_h * out_w;
  Matrix dact(last_layer.out_channels, static_cast<Eigen::Index>(batch) * out_hw);
  for (int b = 0; b < batch; ++b) {
    for (int c = 0; c < last_layer.out_channels; ++c) {
      for (int p = 0; p < out_hw; ++p) dact(c, b * out_hw + p) = dflat(c * out_hw + p, b);
    }
  }

  for (std::size_t l = model.conv.size(); l-- > 0;) {
    const ConvLayer& layer = model.conv[l];
    const ConvCache& cache = pass.layers[l];
    const Eigen::Index cols = static_cast<Eigen::Index>(batch) * cache.h * cache.w;
    Matrix da = layer.pool_after ? max_pool2_backward(dact, cache.argmax, cols) : dact;
    Matrix dz = (cache.activated.array() > 0.0).select(da, 0.0);

    if (layer.bn) {
      const BatchNorm& bn = *layer.bn;
      grad.conv[l].bn->gamma = (dz.array() * cache.xhat.array()).rowwise().sum().matrix();
      grad.conv[l].bn->beta = dz.rowwise().sum();
      const Matrix dxhat = dz.array().colwise() * bn.gamma.array();
      const double m = static_cast<double>(cols);
      const Eigen::VectorXd sum_dxhat = dxhat.rowwise().sum();
      const Eigen::VectorXd sum_dxhat_xhat = (dxhat.array() * cache.xhat.array()).rowwise().sum();
      Matrix centered = (dxhat * m).colwise() - sum_dxhat;
      centered -= (cache.xhat.array().colwise() * sum_dxhat_xhat.array()).matrix();
      dz = (centered.array().colwise() * (cache.inv_std.array() / m)).matrix();
    }

    grad.conv[l].weight = dz * cache.cols.transpose();
    grad.conv[l].bias = dz.rowwise().sum();
    if (l > 0) {
      const Matrix dcols = layer.weight.transpose() * dz;
      dact = col2im(dcols, layer.in_channels, batch, cache.h, cache.w, layer.kernel);
    }
  }
  out.caches = std::move(pass.layers);
  return out;
}

template <typename Model, typename Fn>
void visit_parameters(Model& model, Fn&& fn) {
  for (auto& layer : model.conv) {
    fn(layer.weight.data(), layer.weight.size());
    fn(layer.bias.data(), layer.bias.size());
    if (layer.bn) {
      fn(layer.bn->gamma.data(), layer.bn->gamma.size());
      fn(layer.bn->beta.data(), layer.bn->beta.size());
    }
  }
  fn(model.head.weight.data(), model.head.weight.size());
  fn(model.head.bias.data(), model.head.bias.size());
}

void zero_masked(ToyModel& model, const MaskSet& masks) {
  for (std::size_t l = 0; l < model.conv.size(); ++l) {
    auto& layer = model.conv[l];
    for (int f = 0; f < layer.out_channels; ++f) {
      if (masks.keep[l][static_cast<std::size_t>(f)]) continue;
      layer.weight.row(f).setZero();
      layer.bias(f) = 0.0;
    }
  }
}

}  // namespace

LabeledDataset LabeledDataset::slice(int begin, int count) const {
  std::vector<int> idx(static_cast<std::size_t>(count));
  std::iota(idx.begin(), idx.end(), begin);
  return gather(idx);
}

LabeledDataset LabeledDataset::gather(std::span<const int> indices) const {
  LabeledDataset out;
  out.num_classes = num_classes;
  out.split = split;
  out.images = Tensor4(static_cast<int>(indices.size()), images.c, images.h, images.w);
  const std::size_t stride = static_cast<std::size_t>(images.c) * images.h * images.w;
  out.labels.reserve(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const int src = indices[i];
    require(src >= 0 && src < size(), ErrorCode::InvalidArgument, "dataset index out of range");
    std::copy_n(images.data.begin() + static_cast<std::ptrdiff_t>(src * stride), stride,
                out.images.data.begin() + static_cast<std::ptrdiff_t>(i * stride));
    out.labels.push_back(labels[static_cast<std::size_t>(src)]);
  }
  return out;
}

void LabeledDataset::validate() const {
  require(size() >= 2, ErrorCode::InvalidArgument, "dataset needs at least 2 samples");
  require(images.n == size(), ErrorCode::ShapeMismatch, "image count differs from label count");
  for (int y : labels) {
    require(y >= 0 && y < num_classes, ErrorCode::InvalidArgument, "label outside [0, classes)");
  }
}

std::vector<int> ToyModel::filters_per_layer() const {
  std::vector<int> out;
  for (const auto& layer : conv) out.push_back(layer.out_channels);
  return out;
}

std::pair<int, int> ToyModel::layer_spatial(int layer) const {
  int h = height;
  int w = width;
  for (int l = 0; l < layer; ++l) {
    if (conv[static_cast<std::size_t>(l)].pool_after) {
      h /= 2;
      w /= 2;
    }
  }
  return {h, w};
}

void ToyModel::validate() const {
  require(!conv.empty(), ErrorCode::ShapeMismatch, "model has no conv layers");
  int channels = input_channels;
  int h = height;
  int w = width;
  for (std::size_t l = 0; l < conv.size(); ++l) {
    const ConvLayer& layer = conv[l];
    const std::string where = "conv layer " + std::to_string(l + 1);
    require(layer.in_channels == channels, ErrorCode::ShapeMismatch, where + ": input channels");
    require(layer.weight.rows() == layer.out_channels &&
                layer.weight.cols() == layer.in_channels * layer.kernel * layer.kernel,
            ErrorCode::ShapeMismatch, where + ": weight shape");
    require(layer.bias.size() == layer.out_channels, ErrorCode::ShapeMismatch, where + ": bias");
    if (layer.bn) {
      const auto n = layer.out_channels;
      require(layer.bn->gamma.size() == n && layer.bn->beta.size() == n &&
                  layer.bn->running_mean.size() == n && layer.bn->running_var.size() == n,
              ErrorCode::ShapeMismatch, where + ": batch-norm shape");
    }
    if (layer.pool_after) {
      require(h % 2 == 0 && w % 2 == 0, ErrorCode::ShapeMismatch, where + ": odd size before pool");
      h /= 2;
      w /= 2;
    }
    channels = layer.out_channels;
  }
  require(head.weight.cols() == static_cast<Eigen::Index>(channels) * h * w &&
              head.bias.size() == head.weight.rows(),
          ErrorCode::ShapeMismatch, "dense head does not match the last conv output");
}

ToyArchitecture ToyArchitecture::reference(int num_classes, bool batch_norm) {
  ToyArchitecture arch;
  arch.num_classes = num_classes;
  arch.batch_norm = batch_norm;
  arch.layers = {{8, true}, {16, true}, {16, false}};
  return arch;
}

ToyModel make_toy_model(const ToyArchitecture& arch, std::uint64_t seed) {
  require(!arch.layers.empty(), ErrorCode::InvalidArgument, "architecture has no layers");
  std::mt19937_64 rng(seed);
  auto he_fill = [&rng](auto& m, int fan_in) {
    std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / std::max(1, fan_in)));
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  };

  ToyModel model;
  model.input_channels = arch.input_channels;
  model.height = arch.height;
  model.width = arch.width;
  int channels = arch.input_channels;
  int h = arch.height;
  int w = arch.width;
  for (const auto& spec : arch.layers) {
    ConvLayer layer;
    layer.in_channels = channels;
    layer.out_channels = spec.filters;
    layer.weight.resize(spec.filters, channels * 9);
    he_fill(layer.weight, channels * 9);
    layer.bias = Eigen::VectorXd::Zero(spec.filters);
    if (arch.batch_norm) {
      BatchNorm bn;
      bn.gamma = Eigen::VectorXd::Ones(spec.filters);
      bn.beta = Eigen::VectorXd::Zero(spec.filters);
      bn.running_mean = Eigen::VectorXd::Zero(spec.filters);
      bn.running_var = Eigen::VectorXd::Ones(spec.filters);
      layer.bn = bn;
    }
    layer.pool_after = spec.pool_after;
    if (spec.pool_after) {
      h /= 2;
      w /= 2;
    }
    channels = spec.filters;
    model.conv.push_back(std::move(layer));
  }
  const int inputs = channels * h * w;
  model.head.weight.resize(arch.num_classes, inputs);
  he_fill(model.head.weight, inputs);
  model.head.bias = Eigen::VectorXd::Zero(arch.num_classes);
  model.validate();
  return model;
}

std::size_t parameter_count(const ToyModel& model) {
  std::size_t total = 0;
  for (const auto& layer : model.conv) {
    total += static_cast<std::size_t>(layer.weight.size() + layer.bias.size());
    if (layer.bn) total += static_cast<std::size_t>(2 * layer.out_channels);
  }
  total += static_cast<std::size_t>(model.head.weight.size() + model.head.bias.size());
  return total;
}

Matrix forward_logits(const ToyModel& model, const Tensor4& images, Phase phase) {
  return run_forward(model, images, phase).logits;
}

std::vector<LayerFeatures> forward_extract(const ToyModel& model, const LabeledDataset& batch) {
  require(batch.size() >= 1, ErrorCode::InvalidArgument, "feature extraction on an empty batch");
  const ForwardPass pass = run_forward(model, batch.images, Phase::inference);
  std::vector<LayerFeatures> out;
  out.reserve(pass.layers.size());
  for (std::size_t l = 0; l < pass.layers.size(); ++l) {
    const ConvCache& cache = pass.layers[l];
    const int hw = cache.h * cache.w;
    LayerFeatures layer;
    layer.layer_id = static_cast<int>(l) + 1;
    layer.height = cache.h;
    layer.width = cache.w;
    for (Eigen::Index f = 0; f < cache.activated.rows(); ++f) {
      FeatureMatrix fm;
      fm.layer_id = layer.layer_id;
      fm.feature_index = static_cast<int>(f);
      fm.data.resize(batch.size(), hw);
      for (int b = 0; b < batch.size(); ++b) {
        fm.data.row(b) = cache.activated.row(f).segment(static_cast<Eigen::Index>(b) * hw, hw);
      }
      layer.features.push_back(std::move(fm));
    }
    out.push_back(std::move(layer));
  }
  return out;
}

ToyModel apply_mask(const ToyModel& model, const MaskSet& masks, PruneMode mode) {
  require(masks.layers() == model.num_layers(), ErrorCode::MaskShapeMismatch,
          "mask set covers " + std::to_string(masks.layers()) + " layers, model has " +
              std::to_string(model.num_layers()));
  for (int l = 0; l < model.num_layers(); ++l) {
    require(static_cast<int>(masks.keep[static_cast<std::size_t>(l)].size()) ==
                model.conv[static_cast<std::size_t>(l)].out_channels,
            ErrorCode::MaskShapeMismatch, "mask length differs at layer " + std::to_string(l + 1));
  }

  ToyModel out = model;
  if (mode == PruneMode::zero_weight) {
    zero_masked(out, masks);
    return out;
  }

  require(masks.all_kept_at(model.num_layers() - 1), ErrorCode::LastLayerPruneAttempt,
          "actual pruning cannot remove filters of the final conv layer");
  for (std::size_t l = 0; l < out.conv.size(); ++l) {
    const auto& keep = masks.keep[l];
    std::vector<int> kept;
    for (std::size_t f = 0; f < keep.size(); ++f) {
      if (keep[f]) kept.push_back(static_cast<int>(f));
    }
    if (static_cast<int>(kept.size()) == out.conv[l].out_channels) continue;

    ConvLayer& layer = out.conv[l];
    const auto rows = static_cast<Eigen::Index>(kept.size());
    Matrix weight(rows, layer.weight.cols());
    Eigen::VectorXd bias(rows);
    for (Eigen::Index r = 0; r < rows; ++r) {
      weight.row(r) = layer.weight.row(kept[static_cast<std::size_t>(r)]);
      bias(r) = layer.bias(kept[static_cast<std::size_t>(r)]);
    }
    layer.weight = std::move(weight);
    layer.bias = std::move(bias);
    if (layer.bn) {
      auto select = [&](const Eigen::VectorXd& v) {
        Eigen::VectorXd s(rows);
        for (Eigen::Index r = 0; r < rows; ++r) s(r) = v(kept[static_cast<std::size_t>(r)]);
        return s;
      };
      layer.bn->gamma = select(layer.bn->gamma);
      layer.bn->beta = select(layer.bn->beta);
      layer.bn->running_mean = select(layer.bn->running_mean);
      layer.bn->running_var = select(layer.bn->running_var);
    }
    layer.out_channels = static_cast<int>(rows);

    ConvLayer& next = out.conv[l + 1];
    const int k2 = next.kernel * next.kernel;
    Matrix next_weight(next.weight.rows(), rows * k2);
    for (Eigen::Index r = 0; r < rows; ++r) {
      next_weight.middleCols(r * k2, k2) =
          next.weight.middleCols(static_cast<Eigen::Index>(kept[static_cast<std::size_t>(r)]) * k2, k2);
    }
    next.weight = std::move(next_weight);
    next.in_channels = static_cast<int>(rows);
  }
  out.validate();
  return out;
}

double evaluate(const ToyModel& model, const LabeledDataset& data) {
  require(data.size() >= 1, ErrorCode::InvalidArgument, "evaluation on an empty dataset");
  constexpr int kChunk = 256;
  int correct = 0;
  for (int begin = 0; begin < data.size(); begin += kChunk) {
    const int count = std::min(kChunk, data.size() - begin);
    const LabeledDataset part = data.slice(begin, count);
    const Matrix logits = forward_logits(model, part.images, Phase::inference);
    for (int b = 0; b < count; ++b) {
      Eigen::Index best = 0;
      logits.col(b).maxCoeff(&best);
      if (static_cast<int>(best) == part.labels[static_cast<std::size_t>(b)]) ++correct;
    }
  }
  return static_cast<double>(correct) / data.size();
}

LossAndGradients loss_and_gradients(const ToyModel& model, const Tensor4& images,
                                    std::span<const int> labels) {
  return forward_backward(model, images, labels).lg;
}

std::vector<double> flatten_parameters(const ToyModel& model) {
  std::vector<double> out;
  out.reserve(parameter_count(model));
  visit_parameters(model, [&](const double* p, Eigen::Index n) { out.insert(out.end(), p, p + n); });
  return out;
}

void assign_parameters(ToyModel& model, std::span<const double> values) {
  require(values.size() == parameter_count(model), ErrorCode::ShapeMismatch,
          "parameter vector length differs from the model");
  std::size_t offset = 0;
  visit_parameters(model, [&](double* p, Eigen::Index n) {
    std::copy_n(values.begin() + static_cast<std::ptrdiff_t>(offset), n, p);
    offset += static_cast<std::size_t>(n);
  });
}

TrainResult train(const ToyModel& model, const LabeledDataset& data, const TrainParams& params) {
  require(params.epochs >= 1, ErrorCode::InvalidArgument, "training needs at least one epoch");
  require(params.batch_size >= 1, ErrorCode::InvalidArgument, "batch size must be positive");
  data.validate();

  TrainResult result{model, {}};
  ToyModel& current = result.model;
  if (params.frozen_zero) zero_masked(current, *params.frozen_zero);

  std::mt19937_64 rng(params.seed);
  std::vector<int> order(static_cast<std::size_t>(data.size()));
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> velocity(parameter_count(current), 0.0);

  for (int epoch = 0; epoch < params.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    int batches = 0;
    for (int begin = 0; begin < data.size(); begin += params.batch_size) {
      const int count = std::min(params.batch_size, data.size() - begin);
      if (count < 2 && batches > 0) continue;  // batch-norm statistics need two samples
      const std::span<const int> idx(order.data() + begin, static_cast<std::size_t>(count));
      const LabeledDataset batch = data.gather(idx);
      BackwardResult step = forward_backward(current, batch.images, batch.labels);
      if (!std::isfinite(step.lg.loss)) {
        raise(ErrorCode::DivergenceDetected,
              "training loss became non-finite in epoch " + std::to_string(epoch + 1));
      }
      loss_sum += step.lg.loss;
      ++batches;

      std::vector<double> weights = flatten_parameters(current);
      const std::vector<double> grads = flatten_parameters(step.lg.gradients);
      for (std::size_t i = 0; i < weights.size(); ++i) {
        velocity[i] = params.momentum * velocity[i] - params.learning_rate * grads[i];
        weights[i] += velocity[i];
      }
      assign_parameters(current, weights);
      if (params.frozen_zero) zero_masked(current, *params.frozen_zero);

      for (std::size_t l = 0; l < current.conv.size(); ++l) {
        auto& bn = current.conv[l].bn;
        if (!bn) continue;
        const ConvCache& cache = step.caches[l];
        const double cells = static_cast<double>(count) * cache.h * cache.w;
        const double unbias = cells > 1.0 ? cells / (cells - 1.0) : 1.0;
        bn->running_mean = (1.0 - bn->momentum) * bn->running_mean + bn->momentum * cache.batch_mean;
        bn->running_var =
            (1.0 - bn->momentum) * bn->running_var + bn->momentum * unbias * cache.batch_var;
      }
    }
    const double mean_loss = loss_sum / std::max(1, batches);
    if (!std::isfinite(mean_loss)) {
      raise(ErrorCode::DivergenceDetected, "training loss became non-finite");
    }
    result.epoch_loss.push_back(mean_loss);
  }
  return result;
}

}  // namespace cmiprune
