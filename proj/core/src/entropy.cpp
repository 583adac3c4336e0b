#include "cmiprune/entropy.hpp"

#include "cmiprune/error.hpp"

#include <Eigen/Eigenvalues>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace cmiprune {
namespace {

constexpr double kNegativeEigenTolerance = 1e-8;

void require_same_size(std::span<const NormalizedKernel> gs, Eigen::Index n) {
  for (const auto& g : gs) {
    require(g.size() == n, ErrorCode::DimensionMismatch,
            "kernel of size " + std::to_string(g.size()) + " mixed with size " + std::to_string(n));
  }
}

KernelList concat(std::span<const NormalizedKernel> a, std::span<const NormalizedKernel> b) {
  KernelList out;
  out.reserve(a.size() + b.size());
  out.insert(out.end(), a.begin(), a.end());
  out.insert(out.end(), b.begin(), b.end());
  return out;
}

double entropy_of_spectrum(const std::vector<double>& spectrum, double alpha) {
  double power_sum = 0.0;
  for (double lambda : spectrum) {
    if (lambda > 0.0) power_sum += std::pow(lambda, alpha);
  }
  return std::log2(power_sum) / (1.0 - alpha);
}

}  // namespace

void FeatureMatrix::validate() const {
  require(data.rows() >= 2, ErrorCode::InvalidArgument,
          "feature matrix needs at least 2 samples, got " + std::to_string(data.rows()));
  require(data.cols() >= 1, ErrorCode::InvalidArgument, "feature matrix has no columns");
  require(data.allFinite(), ErrorCode::NonFiniteInput,
          "feature " + std::to_string(feature_index) + " of layer " + std::to_string(layer_id) +
              " has non-finite entries");
}

KernelSpec KernelSpec::rbf_fixed(double sigma) {
  require(sigma > 0.0 && std::isfinite(sigma), ErrorCode::InvalidArgument,
          "fixed RBF bandwidth must be positive");
  return {Kind::rbf, Bandwidth::fixed, sigma};
}

EntropyOrder::EntropyOrder(double alpha) : alpha_(alpha) {
  require(alpha > 0.0 && std::isfinite(alpha), ErrorCode::InvalidArgument,
          "entropy order must be positive");
  require(std::abs(alpha - 1.0) >= 1e-6, ErrorCode::InvalidArgument,
          "entropy order 1 is the Shannon limit and is not evaluated directly");
}

NormalizedKernel NormalizedKernel::from_gram(const Matrix& gram) {
  require(gram.rows() == gram.cols() && gram.rows() >= 1, ErrorCode::DimensionMismatch,
          "Gram matrix must be square and nonempty");
  require(gram.allFinite(), ErrorCode::NonFiniteInput, "Gram matrix has non-finite entries");
  const Eigen::Index n = gram.rows();
  Eigen::VectorXd inv_root(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    require(gram(i, i) > 0.0, ErrorCode::ZeroDiagonal,
            "Gram diagonal entry " + std::to_string(i) + " is not positive");
    inv_root(i) = 1.0 / std::sqrt(gram(i, i));
  }
  auto g = std::make_shared<Matrix>(n, n);
  const double inv_n = 1.0 / static_cast<double>(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    for (Eigen::Index i = j; i < n; ++i) {
      const double v = inv_n * gram(i, j) * inv_root(i) * inv_root(j);
      (*g)(i, j) = v;
      (*g)(j, i) = v;
    }
    (*g)(j, j) = inv_n;
  }
  return NormalizedKernel(std::move(g));
}

NormalizedKernel NormalizedKernel::scaled_identity(Eigen::Index n) {
  require(n >= 1, ErrorCode::InvalidArgument, "kernel size must be positive");
  return NormalizedKernel(
      std::make_shared<Matrix>(Matrix::Identity(n, n) / static_cast<double>(n)));
}

NormalizedKernel NormalizedKernel::constant(Eigen::Index n) {
  require(n >= 1, ErrorCode::InvalidArgument, "kernel size must be positive");
  return NormalizedKernel(
      std::make_shared<Matrix>(Matrix::Constant(n, n, 1.0 / static_cast<double>(n))));
}

NormalizedKernel NormalizedKernel::permuted(std::span<const int> perm) const {
  const Eigen::Index n = size();
  require(static_cast<Eigen::Index>(perm.size()) == n, ErrorCode::DimensionMismatch,
          "permutation length does not match kernel size");
  auto g = std::make_shared<Matrix>(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    for (Eigen::Index i = 0; i < n; ++i) (*g)(i, j) = (*g_)(perm[i], perm[j]);
  }
  return NormalizedKernel(std::move(g));
}

double median_pairwise_distance(const Matrix& x) {
  const Eigen::Index n = x.rows();
  std::vector<double> distances;
  distances.reserve(static_cast<std::size_t>(n * (n - 1) / 2));
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      distances.push_back((x.row(i) - x.row(j)).norm());
    }
  }
  if (distances.empty()) return 0.0;
  const std::size_t mid = distances.size() / 2;
  std::nth_element(distances.begin(), distances.begin() + static_cast<std::ptrdiff_t>(mid),
                   distances.end());
  const double upper = distances[mid];
  if (distances.size() % 2 == 1) return upper;
  const double lower = *std::max_element(distances.begin(),
                                         distances.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lower + upper);
}

NormalizedKernel build_kernel(const FeatureMatrix& x, const KernelSpec& spec) {
  x.validate();
  const Eigen::Index n = x.samples();
  Matrix gram(n, n);

  if (spec.kind == KernelSpec::Kind::delta) {
    require(x.dims() == 1, ErrorCode::InvalidArgument, "delta kernel needs a single label column");
    for (Eigen::Index i = 0; i < n; ++i) {
      const double v = x.data(i, 0);
      require(v == std::round(v), ErrorCode::InvalidArgument,
              "delta kernel needs integer-valued labels");
    }
    for (Eigen::Index j = 0; j < n; ++j) {
      for (Eigen::Index i = 0; i < n; ++i) gram(i, j) = x.data(i, 0) == x.data(j, 0) ? 1.0 : 0.0;
    }
    return NormalizedKernel::from_gram(gram);
  }

  double sigma = spec.sigma;
  if (spec.bandwidth == KernelSpec::Bandwidth::median_heuristic) {
    sigma = median_pairwise_distance(x.data);
    if (!(sigma > 0.0)) {
      spdlog::debug("BandwidthDegenerate: layer {} feature {} has zero median distance; sigma=1",
                    x.layer_id, x.feature_index);
      sigma = 1.0;
    }
  } else {
    require(sigma > 0.0, ErrorCode::InvalidArgument, "fixed RBF bandwidth must be positive");
  }

  const double scale = -1.0 / (2.0 * sigma * sigma);
  for (Eigen::Index j = 0; j < n; ++j) {
    gram(j, j) = 1.0;
    for (Eigen::Index i = j + 1; i < n; ++i) {
      const double v = std::exp(scale * (x.data.row(i) - x.data.row(j)).squaredNorm());
      gram(i, j) = v;
      gram(j, i) = v;
    }
  }
  return NormalizedKernel::from_gram(gram);
}

std::vector<double> eigen_spectrum(const NormalizedKernel& g) {
  Eigen::SelfAdjointEigenSolver<Matrix> solver(g.matrix(), Eigen::EigenvaluesOnly);
  require(solver.info() == Eigen::Success, ErrorCode::EigenFailure,
          "symmetric eigensolver did not converge");
  const auto& values = solver.eigenvalues();
  std::vector<double> spectrum(values.data(), values.data() + values.size());
  // Values under the solver's resolution count as exact zeros.
  const double resolution = static_cast<double>(spectrum.size()) *
                            std::numeric_limits<double>::epsilon() *
                            std::max(1.0, values.cwiseAbs().maxCoeff());
  for (double& v : spectrum) {
    require(v >= -kNegativeEigenTolerance, ErrorCode::NegativeSpectrum,
            "kernel eigenvalue " + std::to_string(v) + " is below -1e-8");
    v = v < resolution ? 0.0 : std::min(v, 1.0);
  }
  std::sort(spectrum.begin(), spectrum.end(), std::greater<>());
  return spectrum;
}

double renyi_entropy(const NormalizedKernel& g, EntropyOrder order) {
  return entropy_of_spectrum(eigen_spectrum(g), order.alpha());
}

HadamardProduct::HadamardProduct(Eigen::Index n) : product_(Matrix::Ones(n, n)) {
  require(n >= 1, ErrorCode::InvalidArgument, "kernel size must be positive");
}

HadamardProduct& HadamardProduct::multiply(const NormalizedKernel& g) {
  require(g.size() == size(), ErrorCode::DimensionMismatch,
          "kernel of size " + std::to_string(g.size()) + " multiplied into product of size " +
              std::to_string(size()));
  product_.array() *= g.matrix().array() * static_cast<double>(size());
  ++factors_;
  return *this;
}

HadamardProduct& HadamardProduct::multiply(std::span<const NormalizedKernel> gs) {
  for (const auto& g : gs) multiply(g);
  return *this;
}

HadamardProduct HadamardProduct::times(const NormalizedKernel& g) const {
  HadamardProduct copy = *this;
  copy.multiply(g);
  return copy;
}

NormalizedKernel HadamardProduct::normalized() const {
  const double trace = product_.trace();
  require(trace > 0.0 && std::isfinite(trace), ErrorCode::ZeroTrace,
          "Hadamard product trace vanished");
  return NormalizedKernel(std::make_shared<Matrix>(product_ / trace));
}

double HadamardProduct::entropy(EntropyOrder order) const {
  if (factors_ == 0) return 0.0;
  return renyi_entropy(normalized(), order);
}

double joint_entropy(std::span<const NormalizedKernel> gs, EntropyOrder order) {
  require(!gs.empty(), ErrorCode::InvalidArgument, "joint entropy of an empty kernel list");
  require_same_size(gs, gs.front().size());
  if (gs.size() == 1) return renyi_entropy(gs.front(), order);
  return HadamardProduct(gs.front().size()).multiply(gs).entropy(order);
}

double mutual_information(const NormalizedKernel& g_y, std::span<const NormalizedKernel> gs,
                          EntropyOrder order) {
  require(!gs.empty(), ErrorCode::InvalidArgument, "mutual information needs at least one kernel");
  require_same_size(gs, g_y.size());
  const KernelList with_y = concat(gs, std::span<const NormalizedKernel>(&g_y, 1));
  return renyi_entropy(g_y, order) + joint_entropy(gs, order) - joint_entropy(with_y, order);
}

double conditional_mi(std::span<const NormalizedKernel> xs, const NormalizedKernel& g_y,
                      std::span<const NormalizedKernel> zs, EntropyOrder order) {
  require(!xs.empty(), ErrorCode::InvalidArgument, "conditional MI needs a nonempty X");
  if (zs.empty()) return mutual_information(g_y, xs, order);
  require_same_size(xs, g_y.size());
  require_same_size(zs, g_y.size());
  const std::span<const NormalizedKernel> y(&g_y, 1);
  const KernelList xz = concat(xs, zs);
  const KernelList yz = concat(y, zs);
  const KernelList xyz = concat(concat(xs, y), zs);
  return joint_entropy(xz, order) + joint_entropy(yz, order) - joint_entropy(xyz, order) -
         joint_entropy(zs, order);
}

double conditional_mi(const NormalizedKernel& g_x, const NormalizedKernel& g_y,
                      std::span<const NormalizedKernel> zs, EntropyOrder order) {
  return conditional_mi(std::span<const NormalizedKernel>(&g_x, 1), g_y, zs, order);
}

}  // namespace cmiprune
