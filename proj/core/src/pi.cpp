#include "sober/pi.hpp"

#include <algorithm>
#include <cmath>

#include "sober/random.hpp"

namespace sober {

namespace {

constexpr double kVarianceFloor = 1e-12;

double normal_cdf(double z) { return 0.5 * std::erfc(-z * M_SQRT1_2); }

}  // namespace

PiState make_pi_state(const DomainSpec& domain, const PriorModel& prior, PiVariant variant) {
  prior.validate(domain);
  PiState state;
  state.prior = prior;
  state.initial_prior = prior;
  state.variant = variant;
  return state;
}

Vector lfi_likelihood(const Vector& mean, const Vector& variance, double eta) {
  if (mean.size() != variance.size()) {
    throw std::invalid_argument("lfi_likelihood: mean/variance length mismatch");
  }
  Vector out(mean.size());
  for (Eigen::Index i = 0; i < mean.size(); ++i) {
    const double sd = std::sqrt(std::max(variance[i], kVarianceFloor));
    out[i] = normal_cdf((mean[i] - eta) / sd);
  }
  return out;
}

Vector lfi_likelihood(const std::vector<Vector>& means, const std::vector<Vector>& variances,
                      const Vector& ensemble_weights, const Vector& etas) {
  if (means.empty() || means.size() != variances.size() ||
      static_cast<Eigen::Index>(means.size()) != ensemble_weights.size() ||
      ensemble_weights.size() != etas.size()) {
    throw std::invalid_argument("lfi_likelihood: inconsistent ensemble");
  }
  Vector out = Vector::Zero(means.front().size());
  for (std::size_t i = 0; i < means.size(); ++i) {
    out += ensemble_weights[static_cast<Eigen::Index>(i)] *
           lfi_likelihood(means[i], variances[i], etas[static_cast<Eigen::Index>(i)]);
  }
  return out;
}

namespace {

struct Sampled {
  std::vector<MixedPoint> points;
  Vector weights;
};

Sampled sample_and_weight(const PriorModel& prior, const DomainSpec& domain,
                          const MeanVarFn& predictor, double eta, int n_samples,
                          std::uint64_t seed) {
  Sampled out;
  out.points = sample_prior(prior, domain, n_samples, seed);
  const Matrix x = embed(domain, out.points);
  Vector mean, var;
  predictor(x, &mean, &var);
  const Vector l = lfi_likelihood(mean, var, eta);
  // Bayes target L(x) pi'(x) over the proposal pi'(x): the prior cancels and
  // the weights reduce to the normalized likelihood. The belief accumulates
  // the likelihood across iterations once the refit replaces the prior.
  out.weights = importance_weights(l, Vector::Ones(l.size()));  // throws on all-zero L
  return out;
}

PriorModel refit_prior(const PiState& state, const EmpiricalMeasure& measure,
                       const DomainSpec& domain) {
  const bool has_cont = domain.continuous_dims() > 0;
  const bool has_disc = domain.categorical_dims() > 0 || domain.binary > 0;
  PriorModel updated = state.prior;
  if (has_cont) {
    updated.continuous = wkde_fit(measure, domain).continuous;
  }
  if (has_disc) {
    updated = mle_update_discrete(updated, measure, domain);
  }
  return updated;
}

}  // namespace

EmpiricalMeasure update_pi(PiState& state, const MeanVarFn& predictor, const DomainSpec& domain,
                           int n_samples, int batch_size, std::uint64_t seed) {
  domain.validate();
  state.was_reset = false;

  if (domain.enumerable) {
    std::vector<MixedPoint> points = domain.candidates;
    const Matrix x = embed(domain, points);
    Vector mean, var;
    predictor(x, &mean, &var);
    Vector l = lfi_likelihood(mean, var, state.eta);
    const double total = l.sum();
    if (!(total > 0.0)) l = Vector::Constant(l.size(), 1.0);  // all underflowed; fall back flat
    const Vector w = l / l.sum();
    ++state.iteration;
    return make_measure(domain, std::move(points), w);
  }

  Sampled sampled;
  bool reset_used = false;
  try {
    sampled = sample_and_weight(state.prior, domain, predictor, state.eta, n_samples, seed);
  } catch (const DegenerateMeasureError&) {
    reset_pi(state);
    reset_used = true;
    sampled = sample_and_weight(state.prior, domain, predictor, state.eta, n_samples,
                                derive_seed(seed, 0x5e7));
  }

  int positive = 0;
  for (Eigen::Index i = 0; i < sampled.weights.size(); ++i) {
    if (sampled.weights[i] > 0.0) ++positive;
  }
  if (positive < batch_size && !reset_used) {
    // overexploitive collapse: return to the initial prior and resample
    reset_pi(state);
    reset_used = true;
    sampled = sample_and_weight(state.prior, domain, predictor, state.eta, n_samples,
                                derive_seed(seed, 0x5e8));
  }
  state.was_reset = reset_used;

  EmpiricalMeasure measure = make_measure(domain, std::move(sampled.points), sampled.weights);
  state.proposed = refit_prior(state, measure, domain);
  state.has_proposed = true;
  ++state.iteration;
  return measure;
}

void commit_pi(PiState& state) {
  if (!state.has_proposed) return;
  state.prior = state.proposed;
  state.has_proposed = false;
}

void reset_pi(PiState& state) {
  state.prior = state.initial_prior;
  state.has_proposed = false;
}

std::vector<MixedPoint> ts_candidates(const GpModel& gp, const NystromFeatures& prior_features,
                                      const EmpiricalMeasure& pool, int n_functions,
                                      std::uint64_t seed) {
  pool.validate();
  if (n_functions < 1) throw std::invalid_argument("ts_candidates: n_functions must be >= 1");

  // Feature map psi_j = phi_j / sqrt(lambda_j); sum_j psi_j(x) psi_j(x') ~ k(x,x').
  const int r = prior_features.retained_features();
  const Vector inv_sqrt_l = prior_features.eigenvalues.array().sqrt().inverse().matrix();
  const Matrix psi_pool =
      inv_sqrt_l.asDiagonal() * eval_test_functions(prior_features, pool.embedded);  // r x N

  Rng rng(seed);
  const int m = gp.data().size();
  Matrix psi_obs;
  Matrix k_pool_obs;
  if (m > 0) {
    psi_obs = inv_sqrt_l.asDiagonal() * eval_test_functions(prior_features, gp.data().X);  // r x m
    k_pool_obs = gram(gp.params(), pool.embedded, gp.data().X);                            // N x m
  }
  const double noise_sd = std::sqrt(gp.noise_variance());

  std::vector<MixedPoint> out;
  out.reserve(n_functions);
  for (int s = 0; s < n_functions; ++s) {
    Vector z(r);
    for (int j = 0; j < r; ++j) z[j] = rng.normal();
    Vector f_pool = psi_pool.transpose() * z;
    if (m > 0) {
      Vector eps(m);
      for (int j = 0; j < m; ++j) eps[j] = noise_sd * rng.normal();
      const Vector residual = gp.data().y - psi_obs.transpose() * z - eps;
      f_pool += k_pool_obs * gp.solve_gram(residual);
    }
    Eigen::Index argmax = 0;
    f_pool.maxCoeff(&argmax);
    out.push_back(pool.points[static_cast<std::size_t>(argmax)]);
  }
  return out;
}

}  // namespace sober
