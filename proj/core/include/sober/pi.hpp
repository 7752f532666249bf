#pragma once

#include <cstdint>
#include <functional>

#include "sober/gp.hpp"
#include "sober/measures.hpp"

namespace sober {

enum class PiVariant { Lfi, Ts };

/// Belief-over-maximizer state. `prior` is the live pi'; `proposed` holds the
/// refit produced by the latest update and replaces `prior` on commit (the
/// solver commits when a batch is told back). `initial_prior` never changes
/// and is restored whenever the weights collapse.
struct PiState {
  PriorModel prior;
  PriorModel initial_prior;
  PriorModel proposed;
  bool has_proposed = false;
  double eta = 0.0;
  PiVariant variant = PiVariant::Lfi;
  int iteration = 0;
  bool was_reset = false;  // latest update fell back to the initial prior
};

PiState make_pi_state(const DomainSpec& domain, const PriorModel& prior, PiVariant variant);

/// Phi[(m - eta) / sqrt(max(C, 1e-12))], elementwise. Values in (0, 1),
/// monotone in the mean, invariant to shifting both m and eta.
Vector lfi_likelihood(const Vector& mean, const Vector& variance, double eta);

/// Marginal LFI likelihood of a weighted hyperparameter ensemble:
/// sum_i w_i Phi[(m_i - eta_i) / sqrt(C_i)].
Vector lfi_likelihood(const std::vector<Vector>& means, const std::vector<Vector>& variances,
                      const Vector& ensemble_weights, const Vector& etas);

/// Posterior mean/variance of the surrogate at embedded query rows (single GP
/// or hypersample ensemble behind one signature).
using MeanVarFn = std::function<void(const Matrix&, Vector*, Vector*)>;

/// One subsampling round: draw X_rec from pi' (or enumerate), score the LFI
/// likelihood, weight by L / pi', and refit the prior from the weighted
/// sample (WKDE continuous block, weighted-frequency discrete blocks;
/// enumerable domains skip the refit). Fewer than batch_size positive weights
/// triggers a one-shot reset to the initial prior. The refit lands in
/// state.proposed; call commit_pi to promote it.
EmpiricalMeasure update_pi(PiState& state, const MeanVarFn& predictor, const DomainSpec& domain,
                           int n_samples, int batch_size, std::uint64_t seed);

/// pi' <- pi of the previous update.
void commit_pi(PiState& state);

/// Reset pi' to the initial snapshot.
void reset_pi(PiState& state);

/// Parallel decoupled Thompson sampling: draws n_functions approximate
/// posterior functions (Nystrom feature expansion of the prior kernel plus
/// the exact pathwise update term) and returns the argmax of each over the
/// pool. Duplicates are kept; candidates form the TS-variant X_rec.
std::vector<MixedPoint> ts_candidates(const GpModel& gp, const NystromFeatures& prior_features,
                                      const EmpiricalMeasure& pool, int n_functions,
                                      std::uint64_t seed);

}  // namespace sober
