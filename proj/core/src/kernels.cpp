#include "sober/kernels.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "sober/random.hpp"

namespace sober {

namespace {

constexpr double kEigClampRatio = 1e-10;

void check_binary(const Vector& x) {
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    if (x[i] != 0.0 && x[i] != 1.0) {
      throw std::invalid_argument("Tanimoto kernel requires binary (0/1) inputs");
    }
  }
}

double tanimoto_ratio(double xy, double xx, double yy) {
  const double denom = xx + yy - xy;
  if (denom <= 0.0) return 0.0;  // both fingerprints all-zero
  return xy / denom;
}

}  // namespace

void KernelParams::validate() const {
  if (!(variance > 0.0) || !std::isfinite(variance)) {
    throw std::invalid_argument("KernelParams: variance must be positive and finite");
  }
  if (kind == KernelKind::Tanimoto) {
    if (lengthscales.size() != 0) {
      throw std::invalid_argument("KernelParams: Tanimoto kernel has no lengthscales");
    }
    return;
  }
  if (lengthscales.size() == 0) {
    throw std::invalid_argument("KernelParams: RBF kernel needs lengthscales");
  }
  for (Eigen::Index i = 0; i < lengthscales.size(); ++i) {
    if (!(lengthscales[i] > 0.0) || !std::isfinite(lengthscales[i])) {
      throw std::invalid_argument("KernelParams: lengthscales must be positive and finite");
    }
  }
}

KernelParams KernelParams::rbf(double variance, const Vector& lengthscales) {
  KernelParams p;
  p.variance = variance;
  p.lengthscales = lengthscales;
  p.kind = KernelKind::RbfArd;
  p.validate();
  return p;
}

KernelParams KernelParams::rbf_iso(double variance, double lengthscale, int dims) {
  return rbf(variance, Vector::Constant(dims, lengthscale));
}

KernelParams KernelParams::tanimoto(double variance) {
  KernelParams p;
  p.variance = variance;
  p.kind = KernelKind::Tanimoto;
  p.validate();
  return p;
}

double eval_kernel(const KernelParams& params, const Vector& x, const Vector& y) {
  params.validate();
  if (x.size() != y.size()) throw std::invalid_argument("eval_kernel: dimension mismatch");
  if (params.kind == KernelKind::Tanimoto) {
    check_binary(x);
    check_binary(y);
    return params.variance * tanimoto_ratio(x.dot(y), x.squaredNorm(), y.squaredNorm());
  }
  if (x.size() != params.lengthscales.size()) {
    throw std::invalid_argument("eval_kernel: point dimension does not match lengthscales");
  }
  const Vector z = (x - y).cwiseQuotient(params.lengthscales);
  return params.variance * std::exp(-0.5 * z.squaredNorm());
}

double eval_kernel(const KernelParams& params, const DomainSpec& domain, const MixedPoint& x,
                   const MixedPoint& y) {
  validate_point(domain, x);
  validate_point(domain, y);
  return eval_kernel(params, embed(domain, x), embed(domain, y));
}

Matrix gram(const KernelParams& params, const Matrix& X, const Matrix& Y) {
  params.validate();
  if (X.rows() == 0 || Y.rows() == 0) throw std::invalid_argument("gram: empty point list");
  if (X.cols() != Y.cols()) throw std::invalid_argument("gram: dimension mismatch");

  if (params.kind == KernelKind::Tanimoto) {
    const Matrix inner = X * Y.transpose();
    const Vector xx = X.rowwise().squaredNorm();
    const Vector yy = Y.rowwise().squaredNorm();
    Matrix out(X.rows(), Y.rows());
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
      for (Eigen::Index j = 0; j < Y.rows(); ++j) {
        out(i, j) = params.variance * tanimoto_ratio(inner(i, j), xx[i], yy[j]);
      }
    }
    return out;
  }

  if (X.cols() != params.lengthscales.size()) {
    throw std::invalid_argument("gram: point dimension does not match lengthscales");
  }
  const Vector inv_l = params.lengthscales.cwiseInverse();
  const Matrix Xs = X * inv_l.asDiagonal();
  const Matrix Ys = Y * inv_l.asDiagonal();
  const Vector xn = Xs.rowwise().squaredNorm();
  const Vector yn = Ys.rowwise().squaredNorm();
  Matrix d2 = (-2.0 * Xs * Ys.transpose());
  d2.colwise() += xn;
  d2.rowwise() += yn.transpose();
  // round-off can push squared distances slightly negative
  return params.variance * (-0.5 * d2.cwiseMax(0.0)).array().exp().matrix();
}

Vector gram_diag(const KernelParams& params, const Matrix& X) {
  params.validate();
  if (params.kind == KernelKind::RbfArd) return Vector::Constant(X.rows(), params.variance);
  Vector out(X.rows());
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    const double n2 = X.row(i).squaredNorm();
    out[i] = n2 > 0.0 ? params.variance : 0.0;
  }
  return out;
}

CovarianceOp kernel_op(const KernelParams& params) {
  params.validate();
  CovarianceOp op;
  op.cross = [params](const Matrix& a, const Matrix& b) { return gram(params, a, b); };
  op.diag = [params](const Matrix& a) { return gram_diag(params, a); };
  return op;
}

CovarianceOp mean_weighted(const CovarianceOp& base, std::function<Vector(const Matrix&)> weight_fn) {
  CovarianceOp op;
  op.cross = [base, weight_fn](const Matrix& a, const Matrix& b) {
    const Vector wa = weight_fn(a);
    const Vector wb = weight_fn(b);
    return wa.asDiagonal() * base.cross(a, b) * wb.asDiagonal();
  };
  op.diag = [base, weight_fn](const Matrix& a) {
    const Vector wa = weight_fn(a);
    return (wa.array().square() * base.diag(a).array()).matrix();
  };
  return op;
}

namespace {

/// Eigendecomposition of a symmetric PSD matrix via randomized subspace
/// iteration. Returns (values, vectors) of the leading rank components,
/// values descending.
void randomized_eig(const Matrix& G, int rank, int oversample, std::uint64_t seed, Vector* values,
                    Matrix* vectors) {
  const Eigen::Index m = G.rows();
  const Eigen::Index k = std::min<Eigen::Index>(m, rank + oversample);
  Rng rng(seed);
  Matrix omega(m, k);
  for (Eigen::Index i = 0; i < m; ++i) {
    for (Eigen::Index j = 0; j < k; ++j) omega(i, j) = rng.normal();
  }
  Matrix q = Eigen::HouseholderQR<Matrix>(G * omega).householderQ() * Matrix::Identity(m, k);
  for (int it = 0; it < 2; ++it) {  // power iterations sharpen the spectrum
    q = Eigen::HouseholderQR<Matrix>(G * q).householderQ() * Matrix::Identity(m, k);
  }
  const Matrix b = q.transpose() * G * q;  // k x k
  Eigen::SelfAdjointEigenSolver<Matrix> eig(0.5 * (b + b.transpose()));
  // SelfAdjointEigenSolver sorts ascending; flip.
  Vector vals = eig.eigenvalues().reverse();
  Matrix vecs = q * eig.eigenvectors().rowwise().reverse();
  *values = vals.head(std::min<Eigen::Index>(rank, vals.size()));
  *vectors = vecs.leftCols(values->size());
}

}  // namespace

NystromFeatures fit_nystrom(const CovarianceOp& kernel, const Matrix& anchors, int n_features,
                            int oversample, std::uint64_t seed) {
  const int m = static_cast<int>(anchors.rows());
  if (m < 1) throw std::invalid_argument("fit_nystrom: need at least one anchor");
  if (n_features < 1) throw std::invalid_argument("fit_nystrom: n_features must be >= 1");

  NystromFeatures out;
  out.anchors = anchors;
  out.kernel = kernel;
  int requested = n_features;
  if (requested > m) {
    requested = m;
    out.truncated = true;
  }

  Matrix g = kernel.cross(anchors, anchors);
  g = 0.5 * (g + g.transpose());

  Vector values;
  Matrix vectors;
  if (m <= 256) {
    Eigen::SelfAdjointEigenSolver<Matrix> eig(g);
    values = eig.eigenvalues().reverse();
    vectors = eig.eigenvectors().rowwise().reverse();
    values.conservativeResize(std::min(requested, m));
    vectors.conservativeResize(Eigen::NoChange, values.size());
  } else {
    randomized_eig(g, requested, oversample, seed, &values, &vectors);
  }

  // Clamp: drop non-positive and relatively negligible eigenvalues so that
  // 1/lambda stays bounded downstream.
  const double lead = values.size() > 0 ? std::max(values[0], 0.0) : 0.0;
  int keep = 0;
  while (keep < values.size() && values[keep] > kEigClampRatio * lead && values[keep] > 0.0) ++keep;
  out.eigenvalues = values.head(keep);
  out.eigenvectors = vectors.leftCols(keep);
  return out;
}

NystromFeatures fit_nystrom(const KernelParams& params, const Matrix& anchors, int n_features,
                            int oversample, std::uint64_t seed) {
  return fit_nystrom(kernel_op(params), anchors, n_features, oversample, seed);
}

Matrix eval_test_functions(const NystromFeatures& features, const Matrix& X) {
  if (X.cols() != features.anchors.cols()) {
    throw std::invalid_argument("eval_test_functions: dimension mismatch");
  }
  return features.eigenvectors.transpose() * features.kernel.cross(features.anchors, X);
}

}  // namespace sober
