#pragma once

// Activations are stored channel-major: channels x (batch * h * w), column
// index b * h * w + y * w + x.

#include <Eigen/Core>

#include <vector>

namespace cmiprune::detail {

using Matrix = Eigen::MatrixXd;

/// (channels * k * k) x (batch * h * w) patch matrix, zero padding k / 2.
Matrix im2col(const Matrix& input, int batch, int h, int w, int k);

/// Adjoint of im2col: scatters patch gradients back onto the input grid.
Matrix col2im(const Matrix& cols, int channels, int batch, int h, int w, int k);

struct PoolResult {
  Matrix output;             // channels x (batch * h/2 * w/2)
  std::vector<int> argmax;   // flat input column of each output cell, per channel
};

PoolResult max_pool2(const Matrix& input, int batch, int h, int w);

Matrix max_pool2_backward(const Matrix& grad_output, const std::vector<int>& argmax,
                          Eigen::Index input_cols);

}  // namespace cmiprune::detail
