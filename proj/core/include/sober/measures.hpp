#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "sober/domain.hpp"

namespace sober {

/// Raised when a weight computation collapses (e.g. every likelihood value is
/// zero). The solver reacts by resetting the prior.
class DegenerateMeasureError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Weighted point set (w_rec, X_rec) approximating the belief over the
/// maximizer. Weights are non-negative and sum to one.
struct EmpiricalMeasure {
  std::vector<MixedPoint> points;
  Vector weights;
  Matrix embedded;  // rows embed(points), kept alongside for the linear algebra

  int size() const { return static_cast<int>(points.size()); }
  void validate() const;
};

EmpiricalMeasure make_measure(const DomainSpec& domain, std::vector<MixedPoint> points,
                              Vector weights);

/// Continuous prior blocks.
struct UniformBlock {};  // uniform over the domain box

struct GaussianBlock {
  Vector mean;
  Vector variance;  // diagonal
};

struct KdeBlock {
  Matrix points;      // N x d_cont
  Vector weights;     // normalized
  Vector bandwidth;   // per-dimension Gaussian bandwidth
};

using ContinuousPrior = std::variant<UniformBlock, GaussianBlock, KdeBlock>;

/// Independent product prior over the blocks of a mixed domain.
struct PriorModel {
  ContinuousPrior continuous = UniformBlock{};
  std::vector<Vector> categorical;  // per-dim normalized class weights
  Vector bernoulli;                 // per-dim success probability in (0, 1)

  void validate(const DomainSpec& domain) const;
};

/// Uniform box + equal-weight discrete blocks.
PriorModel uniform_prior(const DomainSpec& domain);

/// i.i.d. draws, blocks independent, deterministic under seed. Enumerable
/// domains return the full candidate list regardless of N.
std::vector<MixedPoint> sample_prior(const PriorModel& prior, const DomainSpec& domain, int n,
                                     std::uint64_t seed);

/// Density (continuous pdf times discrete pmf) of each point under the prior;
/// clamped below at 1e-300 so downstream ratios stay finite.
Vector prior_density(const PriorModel& prior, const DomainSpec& domain,
                     const std::vector<MixedPoint>& points);

/// Normalized importance weights w_i = (L_i / p_i) / sum_j (L_j / p_j).
/// Throws DegenerateMeasureError when every L is zero.
Vector importance_weights(const Vector& l_values, const Vector& prior_density);

/// Weighted mean and unbiased covariance of the embedded points:
///   mu = sum w_i x_i,  Sigma = 1/(1 - sum w_i^2) sum w_i (x_i - mu)(x_i - mu)^T.
/// Requires N >= 2 and sum w^2 < 1.
void weighted_moments(const Matrix& embedded, const Vector& weights, Vector* mean, Matrix* cov);
void weighted_moments(const EmpiricalMeasure& measure, Vector* mean, Matrix* cov);

/// Weighted Gaussian KDE over the continuous block with Scott's bandwidth
/// h_d = sigma_d * N_eff^(-1/(d+4)), N_eff = 1 / sum w^2. Falls back to an
/// isotropic bandwidth of 1e-3 x domain width when the weighted covariance is
/// degenerate. Discrete blocks of the returned prior are uniform.
PriorModel wkde_fit(const EmpiricalMeasure& measure, const DomainSpec& domain);

/// Weighted maximum-likelihood update of the Bernoulli/categorical blocks
/// (closed-form weighted frequencies, clamped to [1e-4, 1 - 1e-4]).
PriorModel mle_update_discrete(const PriorModel& prior, const EmpiricalMeasure& measure,
                               const DomainSpec& domain);

struct SubsampleResult {
  std::vector<std::size_t> indices;
  std::vector<MixedPoint> points;
  bool with_replacement = false;  // set when positive-weight support was < M
};

/// Draws M points without replacement with probability proportional to the
/// inverse weights 1/w_i over positive-weight points, so heavily weighted
/// regions do not dominate the Nystrom anchors.
SubsampleResult deweighted_subsample(const EmpiricalMeasure& measure, int m, std::uint64_t seed);

/// Candidate set loaded from fingerprint files. The domain is enumerable and
/// purely binary; y holds oracle values when present.
struct FingerprintSet {
  DomainSpec domain;
  std::vector<std::string> labels;
  Vector y;
  bool has_y = false;
};

/// JSONL ingestion: one record per line with fields "bits" (0/1 array),
/// optional "label" (string) and optional "y" (number).
FingerprintSet load_fingerprints_jsonl(const std::string& path);

/// CSV ingestion with header bit_0,...,bit_{d-1}[,y].
FingerprintSet load_fingerprints_csv(const std::string& path);

}  // namespace sober
