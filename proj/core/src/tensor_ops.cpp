#include "tensor_ops.hpp"

namespace cmiprune::detail {

Matrix im2col(const Matrix& input, int batch, int h, int w, int k) {
  const int channels = static_cast<int>(input.rows());
  const int pad = k / 2;
  const int hw = h * w;
  Matrix cols = Matrix::Zero(static_cast<Eigen::Index>(channels) * k * k,
                             static_cast<Eigen::Index>(batch) * hw);
  for (int b = 0; b < batch; ++b) {
    for (int c = 0; c < channels; ++c) {
      for (int ky = 0; ky < k; ++ky) {
        for (int kx = 0; kx < k; ++kx) {
          const Eigen::Index row = (static_cast<Eigen::Index>(c) * k + ky) * k + kx;
          for (int y = 0; y < h; ++y) {
            const int sy = y + ky - pad;
            if (sy < 0 || sy >= h) continue;
            for (int x = 0; x < w; ++x) {
              const int sx = x + kx - pad;
              if (sx < 0 || sx >= w) continue;
              cols(row, b * hw + y * w + x) = input(c, b * hw + sy * w + sx);
            }
          }
        }
      }
    }
  }
  return cols;
}

Matrix col2im(const Matrix& cols, int channels, int batch, int h, int w, int k) {
  const int pad = k / 2;
  const int hw = h * w;
  Matrix input = Matrix::Zero(channels, static_cast<Eigen::Index>(batch) * hw);
  for (int b = 0; b < batch; ++b) {
    for (int c = 0; c < channels; ++c) {
      for (int ky = 0; ky < k; ++ky) {
        for (int kx = 0; kx < k; ++kx) {
          const Eigen::Index row = (static_cast<Eigen::Index>(c) * k + ky) * k + kx;
          for (int y = 0; y < h; ++y) {
            const int sy = y + ky - pad;
            if (sy < 0 || sy >= h) continue;
            for (int x = 0; x < w; ++x) {
              const int sx = x + kx - pad;
              if (sx < 0 || sx >= w) continue;
              input(c, b * hw + sy * w + sx) += cols(row, b * hw + y * w + x);
            }
          }
        }
      }
    }
  }
  return input;
}

PoolResult max_pool2(const Matrix& input, int batch, int h, int w) {
  const int oh = h / 2;
  const int ow = w / 2;
  const Eigen::Index channels = input.rows();
  PoolResult out;
  out.output.resize(channels, static_cast<Eigen::Index>(batch) * oh * ow);
  out.argmax.resize(static_cast<std::size_t>(channels * batch * oh * ow));
  for (Eigen::Index c = 0; c < channels; ++c) {
    for (int b = 0; b < batch; ++b) {
      for (int y = 0; y < oh; ++y) {
        for (int x = 0; x < ow; ++x) {
          int best = b * h * w + (2 * y) * w + 2 * x;
          for (int dy = 0; dy < 2; ++dy) {
            for (int dx = 0; dx < 2; ++dx) {
              const int col = b * h * w + (2 * y + dy) * w + 2 * x + dx;
              if (input(c, col) > input(c, best)) best = col;
            }
          }
          const Eigen::Index out_col = static_cast<Eigen::Index>(b) * oh * ow + y * ow + x;
          out.output(c, out_col) = input(c, best);
          out.argmax[static_cast<std::size_t>(c * out.output.cols() + out_col)] = best;
        }
      }
    }
  }
  return out;
}

Matrix max_pool2_backward(const Matrix& grad_output, const std::vector<int>& argmax,
                          Eigen::Index input_cols) {
  Matrix grad = Matrix::Zero(grad_output.rows(), input_cols);
  for (Eigen::Index c = 0; c < grad_output.rows(); ++c) {
    for (Eigen::Index j = 0; j < grad_output.cols(); ++j) {
      grad(c, argmax[static_cast<std::size_t>(c * grad_output.cols() + j)]) += grad_output(c, j);
    }
  }
  return grad;
}

}  // namespace cmiprune::detail
