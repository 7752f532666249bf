#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "sober/domain.hpp"

namespace sober {

enum class KernelKind { RbfArd, Tanimoto };

/// Hyperparameters of a positive semi-definite kernel over the embedded
/// space. RBF-ARD carries one lengthscale per embedded dimension (continuous,
/// one-hot categorical and binary coordinates alike); Tanimoto carries none.
struct KernelParams {
  double variance = 1.0;
  Vector lengthscales;  // empty for Tanimoto
  KernelKind kind = KernelKind::RbfArd;

  void validate() const;

  static KernelParams rbf(double variance, const Vector& lengthscales);
  static KernelParams rbf_iso(double variance, double lengthscale, int dims);
  static KernelParams tanimoto(double variance);
};

/// k(x, y) on embedded vectors.
///   RBF:      v * exp(-1/2 sum_k ((x_k - y_k) / l_k)^2)
///   Tanimoto: v * <x,y> / (|x|^2 + |y|^2 - <x,y>), 0 if both vectors are all
///             zero. Inputs must be 0/1 vectors.
double eval_kernel(const KernelParams& params, const Vector& x, const Vector& y);

/// Convenience overload on mixed points; both points must conform to domain.
double eval_kernel(const KernelParams& params, const DomainSpec& domain, const MixedPoint& x,
                   const MixedPoint& y);

/// Pairwise kernel matrix between embedded row sets (|X| x |Y|).
Matrix gram(const KernelParams& params, const Matrix& X, const Matrix& Y);

/// k(x, x) for every row of X.
Vector gram_diag(const KernelParams& params, const Matrix& X);

/// A kernel as an operator over embedded point sets. This is the currency the
/// quadrature machinery consumes; it covers plain kernels, GP posterior
/// covariances, and mean-weighted covariances uniformly.
struct CovarianceOp {
  std::function<Matrix(const Matrix&, const Matrix&)> cross;
  std::function<Vector(const Matrix&)> diag;

  Matrix operator()(const Matrix& a, const Matrix& b) const { return cross(a, b); }
};

/// Wraps plain kernel parameters as a CovarianceOp.
CovarianceOp kernel_op(const KernelParams& params);

/// K'(x, y) = w(x) K(x, y) w(y) for a point-wise weight function (used for the
/// mean-weighted Tanimoto covariance).
CovarianceOp mean_weighted(const CovarianceOp& base, std::function<Vector(const Matrix&)> weight_fn);

/// Nystrom test functions phi_j(x) = u_j^T K(X_nys, x) built from the
/// eigendecomposition of the anchor Gram matrix. Eigenvalues are sorted
/// descending; features whose eigenvalue falls at or below 1e-10 * lambda_1
/// (or below zero) are dropped.
struct NystromFeatures {
  Matrix anchors;          // M x d embedded anchor points
  Matrix eigenvectors;     // M x r, column j pairs with eigenvalues[j]
  Vector eigenvalues;      // r, descending, all > 0
  CovarianceOp kernel;     // source kernel
  bool truncated = false;  // n_features request exceeded M and was cut down

  int retained_features() const { return static_cast<int>(eigenvalues.size()); }
};

/// Builds Nystrom features from M anchor rows. Exact eigendecomposition when
/// M <= 256, otherwise randomized SVD with the given oversampling and two
/// power iterations. Deterministic under seed. n_features > M is truncated to
/// M and flagged on the result.
NystromFeatures fit_nystrom(const CovarianceOp& kernel, const Matrix& anchors, int n_features,
                            int oversample, std::uint64_t seed);

NystromFeatures fit_nystrom(const KernelParams& params, const Matrix& anchors, int n_features,
                            int oversample, std::uint64_t seed);

/// Evaluates all retained test functions at X: row j is u_j^T K(X_nys, X),
/// shape (retained x |X|).
Matrix eval_test_functions(const NystromFeatures& features, const Matrix& X);

}  // namespace sober
