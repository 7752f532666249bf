#pragma once

#include <Eigen/Cholesky>
#include <cstdint>
#include <memory>
#include <optional>
#include <stdexcept>

#include "sober/kernels.hpp"

namespace sober {

/// Cholesky factorization failed even after jitter escalation.
class CholeskyError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Observed data, rows of X already embedded.
struct Dataset {
  Matrix X;
  Vector y;

  int size() const { return static_cast<int>(y.size()); }
  void validate() const;
  Dataset appended(const Matrix& x_new, const Vector& y_new) const;
};

Dataset make_dataset(const DomainSpec& domain, const std::vector<MixedPoint>& points, const Vector& y);

/// Exact zero-mean GP regressor. Immutable after construction: the Cholesky
/// factor of K + (sigma_n^2 + jitter) I is cached. Jitter starts at
/// 1e-10 * variance and escalates by x10 up to 1e-4 * variance before
/// CholeskyError is raised.
class GpModel {
 public:
  GpModel() = default;
  GpModel(Dataset data, KernelParams params, double noise_variance);

  const Dataset& data() const { return data_; }
  const KernelParams& params() const { return params_; }
  double noise_variance() const { return noise_var_; }
  double jitter() const { return jitter_; }
  bool empty() const { return data_.size() == 0; }

  /// Posterior mean and full covariance at embedded query rows. The returned
  /// covariance is symmetrized and its diagonal clamped at zero. An empty
  /// dataset yields the prior (zero mean, prior Gram).
  void predict(const Matrix& X, Vector* mean, Matrix* cov) const;

  /// Mean and marginal variance only; cheaper than full covariance.
  void predict_mean_var(const Matrix& X, Vector* mean, Vector* var) const;

  double log_marginal_likelihood() const;

  /// Gradient of the log marginal likelihood w.r.t. the packed
  /// log-hyperparameters (see pack_log_hyperparameters).
  Vector log_marginal_likelihood_gradient() const;

  /// The posterior predictive covariance C(.,.) as a kernel operator.
  CovarianceOp posterior_covariance() const;

  /// (K + sigma_n^2 I)^-1 y_obs. Empty for an empty dataset.
  Vector alpha() const;

  /// (K + sigma_n^2 I)^-1 rhs via the cached factorization (pathwise sampling
  /// and quadrature need this solve). Throws on an empty dataset.
  Matrix solve_gram(const Matrix& rhs) const;

  /// RBF: [log l_1..log l_d, log v, log sigma_n^2]; Tanimoto: [log v, log sigma_n^2].
  Vector pack_log_hyperparameters() const;
  static GpModel from_log_hyperparameters(const Dataset& data, const Vector& packed,
                                          KernelKind kind, int embedding_dim);

 private:
  struct Core;
  Dataset data_;
  KernelParams params_ = KernelParams::rbf_iso(1.0, 1.0, 1);
  double noise_var_ = 0.0;
  double jitter_ = 0.0;
  std::shared_ptr<const Core> core_;  // cached factorization, shared with covariance ops
};

struct MleOptions {
  double log_lengthscale_min = -5.0, log_lengthscale_max = 5.0;
  double log_variance_min = -5.0, log_variance_max = 5.0;
  double log_noise_min = -12.0, log_noise_max = 2.0;
  int adam_steps = 120;
  double learning_rate = 0.1;
  std::optional<double> fixed_noise_variance;  // pins sigma_n^2, excluded from search
};

struct MleResult {
  GpModel model;
  double log_marginal = 0.0;
  bool success = false;  // false when every restart failed; model carries init params
};

/// Multi-restart projected Adam ascent on the log marginal likelihood.
/// Restart 0 starts from init; `restarts` further starts are drawn uniformly
/// inside the bounds. Deterministic under seed; best restart wins, ties by
/// restart index.
MleResult fit_mle(const Dataset& data, const KernelParams& init, double init_noise_variance,
                  int restarts = 8, std::uint64_t seed = 0, const MleOptions& options = {});

enum class WarpKind { Parabolic, Mmlt };

/// Covariance formula used by the MMLT warp. AsPrinted follows
/// C(x,x') = m_g(x) m_g(x') [C_g(x,x') - 1]; Standard uses the conventional
/// moment-matched form m(x) m(x') [exp(C_g(x,x')) - 1].
enum class MmltCovariance { AsPrinted, Standard };

/// A GP fitted on warped observations, predicted back through moment matching.
struct WarpedGp {
  GpModel base;  // fitted on the warped values
  WarpKind kind = WarpKind::Parabolic;
  double eta = 0.0;  // Parabolic only; must satisfy eta >= max(y_obs)
  MmltCovariance mmlt_covariance = MmltCovariance::AsPrinted;
};

/// Parabolic warp f = eta - g^2/2 with g fitted on y_g = sqrt(2 (eta - y)).
/// Throws std::invalid_argument when eta < max(y).
WarpedGp make_parabolic(const Dataset& raw, double eta, const KernelParams& params,
                        double noise_variance);

/// Default eta: max(y) + 1e-6 * range(y).
double default_parabolic_eta(const Vector& y);

/// MMLT warp f = exp(g) - 1 with g fitted on log(y + 1). Throws when any
/// y <= -1.
WarpedGp make_mmlt(const Dataset& raw, const KernelParams& params, double noise_variance,
                   MmltCovariance covariance = MmltCovariance::AsPrinted);

/// m(x) = eta - [m_g(x)^2 + C_g(x,x)] / 2
/// C(x,x') = C_g(x,x')^2 / 2 + m_g(x) C_g(x,x') m_g(x')
void predict_parabolic(const WarpedGp& warped, const Matrix& X, Vector* mean, Matrix* cov);

/// m(x) = exp[m_g(x) + C_g(x,x)/2], covariance per WarpedGp::mmlt_covariance.
void predict_mmlt(const WarpedGp& warped, const Matrix& X, Vector* mean, Matrix* cov);

/// Closed-form integral of the posterior mean of an RBF GP against a Gaussian
/// measure N(mu, diag(sigma2)):
///   int m(x) dpi(x) = v sqrt|2 pi W| N(X_obs; mu, W + Sigma)^T alpha,
/// with W = diag(lengthscales^2).
double gaussian_bq_mean(const GpModel& model, const Vector& mu, const Vector& sigma2);

}  // namespace sober
