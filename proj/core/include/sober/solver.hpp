#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>

#include "sober/distillation.hpp"
#include "sober/pi.hpp"
#include "sober/recombination.hpp"

namespace sober {

enum class SoberMode { Optimize, Quadrature };
enum class QdMethod { Bq, Mcmc };

struct SoberConfig {
  int n_rec = 20000;    // empirical measure size N
  int n_nystrom = 500;  // Nystrom anchor count M
  int batch_size = 8;   // n
  PiVariant variant = PiVariant::Lfi;
  AfSpec acquisition{AfKind::Lfi, 0.2};
  SoberMode mode = SoberMode::Optimize;
  std::uint64_t seed = 0;

  bool fbgp = false;
  int fbgp_h = 50;
  QdMethod qd_method = QdMethod::Bq;
  int qd_samples = 500;  // hypersample candidates fed into distillation

  bool autokq = false;  // compare RCHQ against greedy thinning by wce

  // surrogate refit policy: warm start every iteration, fresh multi-restart
  // search every mle_fresh_every iterations
  int mle_restarts = 4;
  int mle_fresh_every = 5;
  int warm_adam_steps = 25;
  MleOptions mle_options;

  bool tanimoto_mean_weighted = false;  // K'(x,x') = m+(x) C(x,x') m+(x')
  int ts_candidate_count = 2000;        // TS-variant candidate draws
  int oracle_parallelism = 0;           // 0 = hardware concurrency

  void validate() const;
};

struct IterationRecord {
  int iteration = 0;
  std::vector<MixedPoint> batch_points;
  Vector batch_weights;
  Vector y_batch;
  double wce = std::numeric_limits<double>::quiet_NaN();  // skip-const estimate
  double objective_value = std::numeric_limits<double>::quiet_NaN();
  BatchSelection::Method method = BatchSelection::Method::Rchq;
  double best_y = std::numeric_limits<double>::quiet_NaN();
  double eta = std::numeric_limits<double>::quiet_NaN();
  double evidence_mean = std::numeric_limits<double>::quiet_NaN();
  double evidence_var = std::numeric_limits<double>::quiet_NaN();
  Vector measure_mean;  // embedded weighted mean of the empirical measure
  double measure_variance = std::numeric_limits<double>::quiet_NaN();  // trace of weighted cov
  double elapsed_s = 0.0;
  double cumulative_s = 0.0;
};

using Oracle = std::function<double(const MixedPoint&)>;

/// Default surrogate kernel for a domain: RBF with lengthscales at half the
/// span of each embedded coordinate; long pure-binary fingerprint domains
/// default to Tanimoto.
KernelParams default_kernel_params(const DomainSpec& domain);

struct RunResult {
  std::vector<IterationRecord> records;
  bool halted = false;          // an oracle call threw
  std::string halt_reason;
};

/// The SOBER loop: alternating ask (batch selection via kernel recombination
/// against the current belief over the maximizer) and tell (observe, refit,
/// commit the belief update).
class SoberSolver {
 public:
  SoberSolver(DomainSpec domain, PriorModel prior, SoberConfig config);

  /// Selects the next weighted batch. Runs the FBGP or MLE branch, the pi
  /// update, deweighted Nystrom anchor subsampling, Nystrom features of the
  /// posterior covariance, and (objective-)RCHQ / AutoKQ.
  BatchSelection ask();

  /// Feeds back oracle values for the batch returned by the latest ask.
  /// Extends the dataset, refits the surrogate, commits pi' <- pi and appends
  /// the iteration record. NaN observations are rejected.
  void tell(const std::vector<MixedPoint>& points, const Vector& y);

  /// Quadrature-mode evidence estimate from the latest batch and the current
  /// posterior: mean = w_batch^T m(X_batch), variance = the full worst-case
  /// error form with the posterior covariance (clamped at zero).
  std::pair<double, double> estimate_evidence() const;

  /// iterations x (ask -> parallel oracle evaluation -> tell). An oracle
  /// exception halts gracefully with the partial record list.
  RunResult run_loop(const Oracle& oracle, int iterations);

  /// Surrogate posterior mean/variance at embedded query rows, in raw
  /// observation units (the surrogate itself is fit on standardized values).
  void predict(const Matrix& x, Vector* mean, Vector* var) const;

  const std::vector<IterationRecord>& records() const { return records_; }
  const DomainSpec& domain() const { return domain_; }
  const Dataset& dataset() const { return data_; }
  const GpModel& model() const { return model_; }
  const SoberConfig& config() const { return config_; }
  double eta() const { return pi_.eta; }
  double best_observed() const;

 private:
  void refit_surrogate();
  void update_eta();
  EmpiricalMeasure build_measure(Vector* mean_out, Vector* var_out, std::uint64_t seed);
  CovarianceOp surrogate_covariance() const;

  DomainSpec domain_;
  SoberConfig config_;
  PiState pi_;
  Dataset data_;             // raw observations
  Dataset standardized_;     // zero-mean/unit-scale view the surrogate is fit on
  double y_mean_ = 0.0;
  double y_scale_ = 1.0;
  GpModel model_;
  std::optional<HyperMeasure> hyper_;  // FBGP ensemble when enabled
  KernelParams init_params_;
  double init_noise_ = 1e-2;
  int iteration_ = 0;
  bool have_pending_ask_ = false;
  EmpiricalMeasure pending_measure_;
  BatchSelection pending_batch_;
  double pending_ask_seconds_ = 0.0;
  std::vector<IterationRecord> records_;
  double cumulative_seconds_ = 0.0;
};

}  // namespace sober
