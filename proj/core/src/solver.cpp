#include "sober/solver.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <thread>

#include "sober/random.hpp"

namespace sober {

namespace {

double seconds_since(const std::chrono::steady_clock::time_point& start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace

KernelParams default_kernel_params(const DomainSpec& domain) {
  if (domain.binary > 0 && domain.continuous_dims() == 0 && domain.categorical_dims() == 0 &&
      domain.binary >= 64) {
    // long fingerprints default to Tanimoto
    return KernelParams::tanimoto(1.0);
  }
  Vector lengthscales(domain.embedding_dim());
  int k = 0;
  for (const auto& c : domain.continuous) lengthscales[k++] = 0.5 * (c.upper - c.lower);
  for (int classes : domain.categorical_classes) {
    for (int j = 0; j < classes; ++j) lengthscales[k++] = 0.5;
  }
  for (int b = 0; b < domain.binary; ++b) lengthscales[k++] = 0.5;
  return KernelParams::rbf(1.0, lengthscales);
}

void SoberConfig::validate() const {
  if (batch_size < 1) throw std::invalid_argument("SoberConfig: batch_size must be >= 1");
  if (n_rec < batch_size) throw std::invalid_argument("SoberConfig: requires n <= N");
  if (n_nystrom < 1 || n_nystrom > n_rec) throw std::invalid_argument("SoberConfig: requires M <= N");
  if (fbgp && fbgp_h < 1) throw std::invalid_argument("SoberConfig: fbgp_h must be >= 1");
  if (ts_candidate_count < 1) throw std::invalid_argument("SoberConfig: ts_candidate_count >= 1");
  acquisition.validate();
}

SoberSolver::SoberSolver(DomainSpec domain, PriorModel prior, SoberConfig config)
    : domain_(std::move(domain)), config_(std::move(config)) {
  domain_.validate();
  config_.validate();
  pi_ = make_pi_state(domain_, prior, config_.variant);
  init_params_ = default_kernel_params(domain_);
  if (config_.mle_options.fixed_noise_variance) {
    init_noise_ = *config_.mle_options.fixed_noise_variance;
  }
  data_.X.resize(0, domain_.embedding_dim());
  data_.y.resize(0);
  standardized_ = data_;
  model_ = GpModel(data_, init_params_, init_noise_);
}

double SoberSolver::best_observed() const {
  if (data_.size() == 0) return std::numeric_limits<double>::quiet_NaN();
  return data_.y.maxCoeff();
}

void SoberSolver::predict(const Matrix& x, Vector* mean, Vector* var) const {
  if (hyper_) {
    const FbgpPrediction pred = fbgp_predict(*hyper_, standardized_, x);
    if (mean) *mean = (y_mean_ + y_scale_ * pred.mean.array()).matrix();
    if (var) *var = y_scale_ * y_scale_ * pred.variance;
    return;
  }
  Vector mean_z, var_z;
  model_.predict_mean_var(x, mean ? &mean_z : nullptr, var ? &var_z : nullptr);
  if (mean) *mean = (y_mean_ + y_scale_ * mean_z.array()).matrix();
  if (var) *var = y_scale_ * y_scale_ * var_z;
}

CovarianceOp SoberSolver::surrogate_covariance() const {
  CovarianceOp cov;
  if (hyper_) {
    cov = fbgp_covariance(*hyper_, standardized_);
  } else {
    cov = model_.posterior_covariance();
  }
  // back to raw observation units
  const double scale_sq = y_scale_ * y_scale_;
  const CovarianceOp inner = cov;
  cov.cross = [inner, scale_sq](const Matrix& a, const Matrix& b) {
    return Matrix(scale_sq * inner.cross(a, b));
  };
  cov.diag = [inner, scale_sq](const Matrix& a) { return Vector(scale_sq * inner.diag(a)); };

  if (config_.tanimoto_mean_weighted && model_.params().kind == KernelKind::Tanimoto &&
      data_.size() > 0) {
    const SoberSolver* self = this;
    auto weight = [self](const Matrix& x) {
      Vector m;
      self->predict(x, &m, nullptr);
      return Vector(m.cwiseMax(0.0));
    };
    cov = mean_weighted(cov, weight);
  }
  return cov;
}

void SoberSolver::update_eta() {
  if (data_.size() == 0) {
    pi_.eta = 0.0;
    return;
  }
  Vector mean;
  predict(data_.X, &mean, nullptr);
  pi_.eta = mean.maxCoeff();
}

EmpiricalMeasure SoberSolver::build_measure(Vector* mean_out, Vector* var_out, std::uint64_t seed) {
  if (config_.variant == PiVariant::Ts && !domain_.enumerable) {
    // pool from the prior, candidates by decoupled posterior-sample argmax,
    // uniform weights (TS admits no closed-form density for reweighting)
    std::vector<MixedPoint> pool_points =
        sample_prior(pi_.prior, domain_, config_.n_rec, derive_seed(seed, 0x901));
    const Vector uniform_pool =
        Vector::Constant(static_cast<Eigen::Index>(pool_points.size()),
                         1.0 / static_cast<double>(pool_points.size()));
    const EmpiricalMeasure pool = make_measure(domain_, std::move(pool_points), uniform_pool);
    const SubsampleResult anchors = deweighted_subsample(
        pool, std::min(config_.n_nystrom, pool.size()), derive_seed(seed, 0x902));
    Matrix anchor_rows = embed(domain_, anchors.points);
    const NystromFeatures prior_features = fit_nystrom(
        model_.params(), anchor_rows, std::max(1, config_.batch_size - 1), 10,
        derive_seed(seed, 0x903));
    std::vector<MixedPoint> candidates = ts_candidates(model_, prior_features, pool,
                                                       config_.ts_candidate_count,
                                                       derive_seed(seed, 0x904));
    const Vector w = Vector::Constant(static_cast<Eigen::Index>(candidates.size()),
                                      1.0 / static_cast<double>(candidates.size()));
    EmpiricalMeasure measure = make_measure(domain_, std::move(candidates), w);
    if (mean_out || var_out) predict(measure.embedded, mean_out, var_out);
    return measure;
  }

  if (config_.mode == SoberMode::Quadrature && !domain_.enumerable) {
    // Evidence estimation integrates against the task prior, so the
    // empirical measure must keep representing it; exploitation enters
    // through the acquisition steering of the batch instead of a shrinking
    // sampling measure (a narrowed proposal would degenerate the importance
    // weights of the integral).
    std::vector<MixedPoint> points =
        sample_prior(pi_.initial_prior, domain_, config_.n_rec, derive_seed(seed, 0x905));
    const Vector uniform = Vector::Constant(static_cast<Eigen::Index>(points.size()),
                                            1.0 / static_cast<double>(points.size()));
    EmpiricalMeasure measure = make_measure(domain_, std::move(points), uniform);
    if (mean_out || var_out) predict(measure.embedded, mean_out, var_out);
    return measure;
  }

  MeanVarFn predictor = [this](const Matrix& x, Vector* mean, Vector* var) {
    predict(x, mean, var);
  };
  EmpiricalMeasure measure =
      update_pi(pi_, predictor, domain_, config_.n_rec, config_.batch_size, seed);
  if (mean_out || var_out) predict(measure.embedded, mean_out, var_out);
  return measure;
}

BatchSelection SoberSolver::ask() {
  const auto start = std::chrono::steady_clock::now();
  const std::uint64_t seed = derive_seed(config_.seed, 0xa5b, static_cast<std::uint64_t>(iteration_));

  update_eta();

  EmpiricalMeasure measure;
  Vector mean, var;
  try {
    measure = build_measure(&mean, &var, seed);
  } catch (const DegenerateMeasureError& err) {
    throw std::runtime_error(std::string("SoberSolver::ask: measure degenerate after prior reset: ") +
                             err.what());
  }

  // acquisition values over X_rec, min-max scaled before entering the
  // recombination objective
  Vector af_values;
  if (config_.acquisition.kind != AfKind::None) {
    EnsemblePredictions preds;
    if (hyper_) {
      // per-hypersample predictions come out in standardized units
      const double eta_z = (pi_.eta - y_mean_) / y_scale_;
      preds = ensemble_predictions(*hyper_, standardized_, measure.embedded, eta_z);
      for (auto& m : preds.means) m = (y_mean_ + y_scale_ * m.array()).matrix();
      for (auto& v : preds.variances) v *= y_scale_ * y_scale_;
      preds.etas = (y_mean_ + y_scale_ * preds.etas.array()).matrix();
      preds.noise_variances *= y_scale_ * y_scale_;
    } else {
      preds = EnsemblePredictions::single(mean, var, pi_.eta,
                                          y_scale_ * y_scale_ * model_.noise_variance());
    }
    af_values = normalize_af(eval_af(config_.acquisition, preds));
  }

  const int m_anchors = std::min(config_.n_nystrom, measure.size());
  const SubsampleResult anchors = deweighted_subsample(measure, m_anchors, derive_seed(seed, 0x907));
  Matrix anchor_rows(m_anchors, measure.embedded.cols());
  for (int i = 0; i < m_anchors; ++i) {
    anchor_rows.row(i) = measure.embedded.row(static_cast<Eigen::Index>(anchors.indices[i]));
  }

  const CovarianceOp cov = surrogate_covariance();
  const NystromFeatures features = fit_nystrom(cov, anchor_rows,
                                               std::max(1, config_.batch_size - 1), 10,
                                               derive_seed(seed, 0x908));

  BatchSelection batch = auto_kq_select(measure, features, cov, af_values, config_.batch_size,
                                        derive_seed(seed, 0x909), config_.autokq);

  pending_measure_ = std::move(measure);
  pending_batch_ = batch;
  have_pending_ask_ = true;
  pending_ask_seconds_ = seconds_since(start);
  return batch;
}

void SoberSolver::refit_surrogate() {
  // the surrogate sees standardized observations so the zero-mean prior
  // reverts to the average observation, not to raw zero
  y_mean_ = data_.size() > 0 ? data_.y.mean() : 0.0;
  y_scale_ = 1.0;
  if (data_.size() > 1) {
    const double var = (data_.y.array() - y_mean_).square().sum() / (data_.size() - 1);
    y_scale_ = var > 1e-24 ? std::sqrt(var) : 1.0;
  }
  standardized_ = data_;
  standardized_.y = ((data_.y.array() - y_mean_) / y_scale_).matrix();

  if (data_.size() < 2) {
    model_ = GpModel(standardized_, init_params_, init_noise_);
    hyper_.reset();
    return;
  }

  const bool fresh = iteration_ % std::max(1, config_.mle_fresh_every) == 0;
  MleOptions opts = config_.mle_options;
  if (!fresh) opts.adam_steps = config_.warm_adam_steps;
  if (opts.fixed_noise_variance) {
    // the pin is stated in raw units
    opts.fixed_noise_variance = *opts.fixed_noise_variance / (y_scale_ * y_scale_);
  }
  const int restarts = fresh ? config_.mle_restarts : 0;
  const KernelParams warm_init = model_.empty() ? init_params_ : model_.params();
  const double warm_noise = model_.empty() ? init_noise_ : std::max(model_.noise_variance(), 1e-8);

  const MleResult fit = fit_mle(standardized_, warm_init, warm_noise, restarts,
                                derive_seed(config_.seed, 0x77f, static_cast<std::uint64_t>(iteration_)),
                                opts);
  model_ = fit.model;

  if (config_.fbgp) {
    const HyperLayout layout{model_.params().kind, domain_.embedding_dim(), false};
    const HyperPrior prior = HyperPrior::standard(layout.log_hyper_dim());
    const std::uint64_t qd_seed = derive_seed(config_.seed, 0x9d, static_cast<std::uint64_t>(iteration_));
    const int m_samples = std::max(config_.qd_samples, config_.fbgp_h);
    if (config_.qd_method == QdMethod::Bq) {
      hyper_ = qd_bq(standardized_, layout, prior, m_samples, config_.fbgp_h, qd_seed);
    } else {
      const KernelParams hyper_kernel = KernelParams::rbf_iso(1.0, 1.0, layout.log_hyper_dim());
      hyper_ = qd_mcmc(standardized_, layout, prior, m_samples, config_.fbgp_h, hyper_kernel,
                       qd_seed);
    }
  }
}

void SoberSolver::tell(const std::vector<MixedPoint>& points, const Vector& y) {
  const auto start = std::chrono::steady_clock::now();
  if (static_cast<Eigen::Index>(points.size()) != y.size()) {
    throw std::invalid_argument("SoberSolver::tell: shape mismatch");
  }
  if (points.empty()) throw std::invalid_argument("SoberSolver::tell: empty batch");
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    if (std::isnan(y[i])) throw std::invalid_argument("SoberSolver::tell: NaN observation rejected");
  }
  for (const auto& p : points) validate_point(domain_, p);

  data_ = data_.appended(embed(domain_, points), y);
  refit_surrogate();
  commit_pi(pi_);
  update_eta();

  IterationRecord record;
  record.iteration = iteration_;
  record.batch_points = points;
  record.y_batch = y;
  record.best_y = best_observed();
  record.eta = pi_.eta;
  if (have_pending_ask_) {
    record.batch_weights = pending_batch_.weights;
    record.wce = pending_batch_.wce;
    record.objective_value = pending_batch_.objective_value;
    record.method = pending_batch_.method;
    if (pending_measure_.size() >= 2) {
      try {
        Vector mmean;
        Matrix mcov;
        weighted_moments(pending_measure_, &mmean, &mcov);
        record.measure_mean = mmean;
        record.measure_variance = mcov.trace();
      } catch (const std::invalid_argument&) {
        // all mass on one point: leave the moment fields NaN
      }
    }
    if (config_.mode == SoberMode::Quadrature) {
      const auto [ev_mean, ev_var] = estimate_evidence();
      record.evidence_mean = ev_mean;
      record.evidence_var = ev_var;
    }
  }
  record.elapsed_s = pending_ask_seconds_ + seconds_since(start);
  cumulative_seconds_ += record.elapsed_s;
  record.cumulative_s = cumulative_seconds_;
  records_.push_back(std::move(record));

  have_pending_ask_ = false;
  pending_ask_seconds_ = 0.0;
  ++iteration_;
}

std::pair<double, double> SoberSolver::estimate_evidence() const {
  if (config_.mode != SoberMode::Quadrature) {
    throw std::logic_error("estimate_evidence: solver not in Quadrature mode");
  }
  if (pending_batch_.size() == 0) {
    throw std::logic_error("estimate_evidence: no batch available yet");
  }
  Vector mean;
  predict(pending_batch_.embedded, &mean, nullptr);
  const double ev_mean = pending_batch_.weights.dot(mean);
  const CovarianceOp cov = surrogate_covariance();
  const double ev_var =
      std::max(wce_estimate(cov, pending_batch_, pending_measure_, /*skip_const=*/false), 0.0);
  return {ev_mean, ev_var};
}

RunResult SoberSolver::run_loop(const Oracle& oracle, int iterations) {
  if (iterations < 0) throw std::invalid_argument("run_loop: negative iteration count");
  RunResult result;
  unsigned parallelism = config_.oracle_parallelism > 0
                             ? static_cast<unsigned>(config_.oracle_parallelism)
                             : std::max(1u, std::thread::hardware_concurrency());

  for (int t = 0; t < iterations; ++t) {
    BatchSelection batch = ask();
    Vector y(batch.size());
    bool failed = false;
    std::string reason;
    for (int start = 0; start < batch.size() && !failed; start += static_cast<int>(parallelism)) {
      const int stop = std::min(batch.size(), start + static_cast<int>(parallelism));
      std::vector<std::future<double>> wave;
      for (int i = start; i < stop; ++i) {
        wave.push_back(std::async(std::launch::async, oracle, batch.points[static_cast<std::size_t>(i)]));
      }
      for (int i = start; i < stop; ++i) {
        try {
          y[i] = wave[static_cast<std::size_t>(i - start)].get();
        } catch (const std::exception& e) {
          failed = true;
          reason = e.what();
        }
      }
    }
    if (failed) {
      result.halted = true;
      result.halt_reason = reason;
      break;
    }
    tell(batch.points, y);
  }
  result.records = records_;
  return result;
}

}  // namespace sober
