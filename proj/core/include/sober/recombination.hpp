#pragma once

#include <cstdint>
#include <vector>

#include "sober/kernels.hpp"
#include "sober/measures.hpp"

namespace sober {

/// An n-point weighted quadrature rule extracted from an empirical measure.
struct BatchSelection {
  enum class Method { Rchq, Thinning };

  std::vector<std::size_t> indices;  // distinct positions into the source measure
  std::vector<MixedPoint> points;
  Matrix embedded;
  Vector weights;                    // non-negative, sum 1 (within 1e-9)
  double objective_value = 0.0;      // achieved w^T alpha(X_batch)
  double wce = 0.0;                  // skip-const worst-case-error estimate
  Method method = Method::Rchq;

  int size() const { return static_cast<int>(indices.size()); }
  void validate() const;
};

struct RecombineResult {
  std::vector<std::size_t> indices;
  Vector weights;
};

/// Carathéodory measure reduction: given N weights (non-negative, summing to
/// one) and k test functions evaluated at the support (k x N), returns at most
/// k + 1 points whose non-negative weights reproduce total mass and every test
/// function moment.
///
/// Divide-and-conquer: the support is split into 2(k+1) blocks, each block is
/// collapsed to its aggregated moment column, the block system is reduced by
/// null-space elimination, and surviving blocks rescale their member weights;
/// the point count halves per round, so the whole run costs
/// O(kN + k^3 log(N/k)). When `objective` is given, each elimination step
/// moves toward whichever feasible endpoint leaves the larger sum w^T alpha.
RecombineResult recombine(const Vector& weights, const Matrix& test_fns, std::uint64_t seed,
                          const Vector* objective = nullptr);

RecombineResult recombine(const EmpiricalMeasure& measure, const Matrix& test_fns,
                          std::uint64_t seed);

/// Worst-case integration error (squared MMD form) of a weighted batch
/// against the source measure:
///   w_b^T K(B,B) w_b - 2 w_b^T K(B,R) w_rec [+ w_rec^T K(R,R) w_rec].
/// The third term does not depend on the batch; skip_const drops it so two
/// batches can be compared without the N x N Gram.
double wce_estimate(const CovarianceOp& kernel, const Matrix& batch_embedded,
                    const Vector& batch_weights, const EmpiricalMeasure& measure, bool skip_const);

double wce_estimate(const CovarianceOp& kernel, const BatchSelection& batch,
                    const EmpiricalMeasure& measure, bool skip_const);

/// Objective-steered recombination on Nystrom test functions: feasible per
/// recombine, with the elimination degrees of freedom spent on pushing
/// w^T alpha upward. af_values may be empty (no steering). Uses at most n - 1
/// leading test functions.
BatchSelection objective_rchq(const EmpiricalMeasure& measure, const NystromFeatures& nystrom,
                              const Vector& af_values, int n, std::uint64_t seed);

/// Greedy uniform-weight MMD minimization: picks n points one at a time, each
/// minimizing the worst-case error of the equal-weight rule against the
/// measure; near-ties go to the larger acquisition value, then the lower
/// index.
BatchSelection greedy_thinning(const EmpiricalMeasure& measure, const CovarianceOp& kernel,
                               const Vector& af_values, int n);

/// Runs objective-RCHQ and greedy thinning, compares their skip-const wce and
/// returns the better batch (ties favor RCHQ). With use_thinning = false the
/// RCHQ batch is returned directly.
BatchSelection auto_kq_select(const EmpiricalMeasure& measure, const NystromFeatures& nystrom,
                              const CovarianceOp& kernel, const Vector& af_values, int n,
                              std::uint64_t seed, bool use_thinning = true);

}  // namespace sober
