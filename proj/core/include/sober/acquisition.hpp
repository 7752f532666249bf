#pragma once

#include <vector>

#include "sober/domain.hpp"

namespace sober {

enum class AfKind { Lfi, Ei, Ucb, MesFitbo, Bqbc, QbMgp, None };

struct AfSpec {
  AfKind kind = AfKind::Lfi;
  double beta = 0.2;  // UCB exploration weight, must be >= 0

  void validate() const;
};

/// Per-hypersample surrogate predictions at a common query set, plus the
/// ensemble weights. A single-entry ensemble with weight one recovers the
/// plain (non-fully-Bayesian) acquisition functions.
struct EnsemblePredictions {
  std::vector<Vector> means;      // H vectors of length P
  std::vector<Vector> variances;  // H vectors of length P
  Vector weights;                 // H, normalized
  Vector etas;                    // H incumbents (per-hypersample eta)
  Vector noise_variances;         // H, used by MES/FITBO

  int ensemble_size() const { return static_cast<int>(means.size()); }
  int query_size() const { return means.empty() ? 0 : static_cast<int>(means.front().size()); }
  void validate() const;

  static EnsemblePredictions single(Vector mean, Vector variance, double eta,
                                    double noise_variance = 0.0);
};

/// Evaluates the acquisition function at every query point, with expectations
/// over hyperparameters replaced by the ensemble-weighted sums.
Vector eval_af(const AfSpec& spec, const EnsemblePredictions& ensemble);

/// Min-max rescaling of acquisition values to [0, 1] so the recombination
/// objective stays commensurate with the moment constraints; a constant
/// vector maps to all zeros (inert objective).
Vector normalize_af(const Vector& values);

}  // namespace sober
