#pragma once

// Matrix-based Renyi alpha-order entropy on trace-normalized kernel Gram
// matrices, and the joint / mutual / conditional quantities built on it.
// All results are in bits.

#include <Eigen/Core>

#include <memory>
#include <span>
#include <vector>

namespace cmiprune {

using Matrix = Eigen::MatrixXd;

/// n samples x d flattened activation values of one feature map.
struct FeatureMatrix {
  Matrix data;
  int layer_id = 0;
  int feature_index = 0;

  [[nodiscard]] Eigen::Index samples() const noexcept { return data.rows(); }
  [[nodiscard]] Eigen::Index dims() const noexcept { return data.cols(); }

  /// Throws InvalidArgument for n < 2 or d < 1, NonFiniteInput for NaN/inf.
  void validate() const;
};

struct KernelSpec {
  enum class Kind { rbf, delta };
  enum class Bandwidth { median_heuristic, fixed };

  Kind kind = Kind::rbf;
  Bandwidth bandwidth = Bandwidth::median_heuristic;
  double sigma = 1.0;  // used only with Bandwidth::fixed

  static KernelSpec rbf_median() { return {}; }
  static KernelSpec rbf_fixed(double sigma);
  static KernelSpec delta() { return {Kind::delta, Bandwidth::fixed, 1.0}; }
};

class EntropyOrder {
 public:
  static constexpr double kDefault = 1.01;

  explicit EntropyOrder(double alpha = kDefault);

  [[nodiscard]] double alpha() const noexcept { return alpha_; }

 private:
  double alpha_;
};

/// Symmetric PSD n x n matrix with unit trace and diagonal 1/n. Immutable;
/// copies share storage, so lists of kernels are cheap to assemble.
class NormalizedKernel {
 public:
  /// G_ij = K_ij / (n * sqrt(K_ii * K_jj)).
  static NormalizedKernel from_gram(const Matrix& gram);
  /// (1/n) I: every sample distinguishable.
  static NormalizedKernel scaled_identity(Eigen::Index n);
  /// All entries 1/n: no sample distinguishable.
  static NormalizedKernel constant(Eigen::Index n);

  [[nodiscard]] const Matrix& matrix() const noexcept { return *g_; }
  [[nodiscard]] Eigen::Index size() const noexcept { return g_->rows(); }
  [[nodiscard]] double operator()(Eigen::Index i, Eigen::Index j) const { return (*g_)(i, j); }

  /// Kernel of the same variable with its samples reordered: G'_ij = G_{p(i) p(j)}.
  [[nodiscard]] NormalizedKernel permuted(std::span<const int> perm) const;

 private:
  explicit NormalizedKernel(std::shared_ptr<const Matrix> g) : g_(std::move(g)) {}
  friend class HadamardProduct;

  std::shared_ptr<const Matrix> g_;
};

using KernelList = std::vector<NormalizedKernel>;

/// Median of the pairwise Euclidean distances between rows (i < j).
double median_pairwise_distance(const Matrix& x);

NormalizedKernel build_kernel(const FeatureMatrix& x, const KernelSpec& spec);

/// Eigenvalues of g, sorted descending, clamped into [0, 1]. Throws
/// NegativeSpectrum if any raw eigenvalue is below -1e-8.
std::vector<double> eigen_spectrum(const NormalizedKernel& g);

double renyi_entropy(const NormalizedKernel& g, EntropyOrder order);

/// Running elementwise product of normalized kernels. Factors are stored
/// rescaled to unit diagonal so long products never underflow; the trace
/// normalization at the end makes the scale irrelevant.
class HadamardProduct {
 public:
  explicit HadamardProduct(Eigen::Index n);

  HadamardProduct& multiply(const NormalizedKernel& g);
  HadamardProduct& multiply(std::span<const NormalizedKernel> gs);
  [[nodiscard]] HadamardProduct times(const NormalizedKernel& g) const;

  [[nodiscard]] Eigen::Index size() const noexcept { return product_.rows(); }
  [[nodiscard]] std::size_t factors() const noexcept { return factors_; }

  /// Product divided by its trace. Throws ZeroTrace if the trace vanished.
  [[nodiscard]] NormalizedKernel normalized() const;
  /// Entropy of the normalized product; 0 for an empty product.
  [[nodiscard]] double entropy(EntropyOrder order) const;

 private:
  Matrix product_;
  std::size_t factors_ = 0;
};

/// S(G_1, ..., G_L): entropy of the trace-normalized Hadamard product.
double joint_entropy(std::span<const NormalizedKernel> gs, EntropyOrder order);

/// I(Y; G_1..G_L) = S(Y) + S(G_1..G_L) - S(G_1..G_L, Y).
double mutual_information(const NormalizedKernel& g_y, std::span<const NormalizedKernel> gs,
                          EntropyOrder order);

/// I(X; Y | Z) = S(X,Z) + S(Y,Z) - S(X,Y,Z) - S(Z), where X may itself be a
/// set of variables. An empty Z reduces to mutual_information(g_y, xs).
double conditional_mi(std::span<const NormalizedKernel> xs, const NormalizedKernel& g_y,
                      std::span<const NormalizedKernel> zs, EntropyOrder order);

double conditional_mi(const NormalizedKernel& g_x, const NormalizedKernel& g_y,
                      std::span<const NormalizedKernel> zs, EntropyOrder order);

}  // namespace cmiprune
