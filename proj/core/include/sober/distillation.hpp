#pragma once

#include <cstdint>

#include "sober/acquisition.hpp"
#include "sober/gp.hpp"
#include "sober/measures.hpp"

namespace sober {

/// Shape of a hypersample vector: [log l_1..log l_d, log v, log sigma_n^2]
/// for RBF (d = embedding_dim), [log v, log sigma_n^2] for Tanimoto, with an
/// optional trailing raw eta when the parabolic path is active.
struct HyperLayout {
  KernelKind kind = KernelKind::RbfArd;
  int embedding_dim = 1;
  bool has_eta = false;

  int log_hyper_dim() const {
    return (kind == KernelKind::RbfArd ? embedding_dim : 0) + 2;
  }
  int dim() const { return log_hyper_dim() + (has_eta ? 1 : 0); }
};

/// Weighted hypersample set (w_QD, theta_QD). Degenerates to one row for
/// type-II MLE.
struct HyperMeasure {
  Matrix samples;  // H x layout.dim()
  Vector weights;  // non-negative, sum 1
  HyperLayout layout;
  bool flagged = false;  // low MCMC acceptance or BQ fallback happened

  int size() const { return static_cast<int>(samples.rows()); }
  void validate() const;
};

HyperMeasure single_hypersample(const GpModel& model);

/// Multivariate normal hyperprior over the log-hyperparameter block.
struct HyperPrior {
  Vector mean;
  Matrix covariance;  // symmetric positive definite

  void validate() const;
  static HyperPrior standard(int dim);  // zero mean, identity covariance
};

/// The GP (on the raw observations) encoded by one hypersample row; eta
/// components are ignored here.
GpModel model_from_hypersample(const Dataset& data, const Vector& theta, const HyperLayout& layout);

struct QdMcmcOptions {
  double initial_scale = 0.3;  // proposal step, in units of the prior std
  bool adapt = true;           // Robbins-Monro adaptation toward 0.3 acceptance
};

struct McmcChain {
  Matrix samples;  // m_samples x log_hyper_dim, post burn-in, thinned
  double acceptance = 0.0;
};

/// Raw adaptive random-walk Metropolis over the hyperposterior
/// Pi(theta) ~ L(theta) Pi'(theta): burn-in 500, thinning 2, target
/// acceptance 0.3. Exposed so distilled ensembles can be validated against
/// the plain Monte Carlo chain.
McmcChain run_hyper_mcmc(const Dataset& data, const HyperLayout& layout,
                         const HyperPrior& hyperprior, int m_samples, std::uint64_t seed,
                         const QdMcmcOptions& options = {});

/// Reduces weighted hypersamples to at most h points by recombination against
/// the given test functions; moments of every test function are preserved.
HyperMeasure distill_hypersamples(const Matrix& samples, const Vector& weights,
                                  const HyperLayout& layout, const NystromFeatures& features,
                                  std::uint64_t seed);

/// run_hyper_mcmc followed by recombination against Nystrom test functions of
/// kernel_hyper over log-hyperparameter space. Acceptance below 1% returns
/// the chain strided down to H points (duplicates merged) with the flag set.
HyperMeasure qd_mcmc(const Dataset& data, const HyperLayout& layout, const HyperPrior& hyperprior,
                     int m_samples, int h, const KernelParams& kernel_hyper, std::uint64_t seed,
                     const QdMcmcOptions& options = {});

/// BQ route: draws theta_obs from the hyperprior, evaluates the marginal
/// likelihood, fits a hyper-GP by MLE, computes the analytic kernel-mean
/// weights w'_BQ, forms w_BQ = w'_BQ .* L / (w'_BQ^T L) and distills. Falls
/// back to qd_mcmc (flagged) when w'_BQ^T L <= 0.
HyperMeasure qd_bq(const Dataset& data, const HyperLayout& layout, const HyperPrior& hyperprior,
                   int m_samples, int h, std::uint64_t seed);

/// Analytic BQ prior weights of a fitted RBF hyper-GP:
///   w'_BQ = [K + sigma^2 I]^-1 (v sqrt|2 pi W| N(theta_obs; mu, W + Sigma)).
Vector bq_prior_weights(const GpModel& hyper_gp, const HyperPrior& hyperprior);

/// Appends a raw eta column: eta_i = max(y) + |eps_i|, eps_i ~ N(0, (0.1 range)^2).
void attach_parabolic_etas(HyperMeasure& measure, const Vector& y, std::uint64_t seed);

struct FbgpPrediction {
  Vector mean;        // m_QD
  Vector variance;    // V_QD, clamped >= 0
  Matrix covariance;  // C_QD: between-model covariance of the means
  bool dropped_any = false;
};

/// Marginal predictive posterior of the distilled fully-Bayesian GP:
///   m_QD  = sum_i w_i m_i
///   V_QD  = sum_i w_i (C_i(x,x) + m_i^2) - m_QD^2
///   C_QD  = sum_i w_i (m_i(x) - m_QD(x)) (m_i(x') - m_QD(x'))
/// Hypersamples whose Cholesky fails are dropped with renormalization.
FbgpPrediction fbgp_predict(const HyperMeasure& hm, const Dataset& data, const Matrix& X);

/// Per-hypersample predictions packaged for the acquisition functions. When
/// the layout carries eta, predictions go through the parabolic warp.
EnsemblePredictions ensemble_predictions(const HyperMeasure& hm, const Dataset& data,
                                         const Matrix& X, double default_eta);

/// Marginal predictive covariance as a kernel operator (within-model average
/// plus between-model mean spread); consistent with V_QD on the diagonal.
CovarianceOp fbgp_covariance(const HyperMeasure& hm, const Dataset& data);

}  // namespace sober
