#include "sober/distillation.hpp"

#include <Eigen/Cholesky>
#include <algorithm>
#include <cmath>

#include "sober/random.hpp"
#include "sober/recombination.hpp"

namespace sober {

void HyperMeasure::validate() const {
  if (samples.rows() < 1) throw std::invalid_argument("HyperMeasure: needs at least one sample");
  if (samples.rows() != weights.size()) {
    throw std::invalid_argument("HyperMeasure: samples/weights mismatch");
  }
  if (samples.cols() != layout.dim()) {
    throw std::invalid_argument("HyperMeasure: sample width does not match layout");
  }
  if ((weights.array() < 0.0).any() || std::abs(weights.sum() - 1.0) > 1e-9) {
    throw std::invalid_argument("HyperMeasure: weights must be a distribution");
  }
}

HyperMeasure single_hypersample(const GpModel& model) {
  HyperMeasure hm;
  hm.layout.kind = model.params().kind;
  hm.layout.embedding_dim = static_cast<int>(model.params().lengthscales.size());
  hm.samples.resize(1, hm.layout.dim());
  hm.samples.row(0) = model.pack_log_hyperparameters().transpose();
  hm.weights = Vector::Constant(1, 1.0);
  return hm;
}

void HyperPrior::validate() const {
  if (mean.size() == 0 || covariance.rows() != mean.size() || covariance.cols() != mean.size()) {
    throw std::invalid_argument("HyperPrior: shape mismatch");
  }
  Eigen::LLT<Matrix> llt(covariance);
  if (llt.info() != Eigen::Success) {
    throw std::invalid_argument("HyperPrior: covariance must be positive definite");
  }
}

HyperPrior HyperPrior::standard(int dim) {
  HyperPrior p;
  p.mean = Vector::Zero(dim);
  p.covariance = Matrix::Identity(dim, dim);
  return p;
}

GpModel model_from_hypersample(const Dataset& data, const Vector& theta, const HyperLayout& layout) {
  if (theta.size() != layout.dim()) {
    throw std::invalid_argument("model_from_hypersample: theta width mismatch");
  }
  const Vector packed = theta.head(layout.log_hyper_dim());
  return GpModel::from_log_hyperparameters(data, packed, layout.kind, layout.embedding_dim);
}

namespace {

double log_hyperposterior(const Dataset& data, const Vector& theta, const HyperLayout& layout,
                          const HyperPrior& prior, const Eigen::LLT<Matrix>& prior_llt) {
  double log_prior;
  {
    const Vector d = theta - prior.mean;
    const Vector z = prior_llt.matrixL().solve(d);
    log_prior = -0.5 * z.squaredNorm();  // normalizer cancels in MH ratios
  }
  try {
    const GpModel model = model_from_hypersample(data, theta, layout);
    const double lml = model.log_marginal_likelihood();
    if (!std::isfinite(lml)) return -std::numeric_limits<double>::infinity();
    return lml + log_prior;
  } catch (const CholeskyError&) {
    return -std::numeric_limits<double>::infinity();
  }
}

}  // namespace

McmcChain run_hyper_mcmc(const Dataset& data, const HyperLayout& layout,
                         const HyperPrior& hyperprior, int m_samples, std::uint64_t seed,
                         const QdMcmcOptions& options) {
  data.validate();
  hyperprior.validate();
  if (m_samples < 1) throw std::invalid_argument("run_hyper_mcmc: m_samples must be >= 1");
  if (hyperprior.mean.size() != layout.log_hyper_dim()) {
    throw std::invalid_argument("run_hyper_mcmc: hyperprior dimension mismatch");
  }

  const int dim = layout.log_hyper_dim();
  Eigen::LLT<Matrix> prior_llt(hyperprior.covariance);
  const Vector prior_sd = hyperprior.covariance.diagonal().array().sqrt().matrix();

  Rng rng(derive_seed(seed, 0x3c3c));
  Vector current = hyperprior.mean;
  double current_lp = log_hyperposterior(data, current, layout, hyperprior, prior_llt);
  double scale = options.initial_scale;

  constexpr int kBurnIn = 500;
  constexpr int kThin = 2;
  constexpr int kAdaptWindow = 50;

  int window_accepts = 0;
  auto step = [&]() {
    Vector proposal = current;
    for (int k = 0; k < dim; ++k) proposal[k] += scale * prior_sd[k] * rng.normal();
    const double lp = log_hyperposterior(data, proposal, layout, hyperprior, prior_llt);
    const double log_u = std::log(std::max(rng.uniform(), 1e-300));
    if (lp - current_lp > log_u) {
      current = proposal;
      current_lp = lp;
      ++window_accepts;
      return true;
    }
    return false;
  };

  for (int i = 1; i <= kBurnIn; ++i) {
    step();
    if (options.adapt && i % kAdaptWindow == 0) {
      const double rate = static_cast<double>(window_accepts) / kAdaptWindow;
      scale *= std::exp(rate - 0.3);
      scale = std::clamp(scale, 1e-3, 10.0);
      window_accepts = 0;
    }
  }

  McmcChain chain;
  chain.samples.resize(m_samples, dim);
  int accepts = 0;
  for (int i = 0; i < m_samples; ++i) {
    for (int t = 0; t < kThin; ++t) {
      if (step()) ++accepts;
    }
    chain.samples.row(i) = current.transpose();
  }
  chain.acceptance = static_cast<double>(accepts) / (m_samples * kThin);
  return chain;
}

HyperMeasure distill_hypersamples(const Matrix& samples, const Vector& weights,
                                  const HyperLayout& layout, const NystromFeatures& features,
                                  std::uint64_t seed) {
  if (samples.rows() != weights.size()) {
    throw std::invalid_argument("distill_hypersamples: shape mismatch");
  }
  const Matrix phi = eval_test_functions(features, samples);
  const RecombineResult reduced = recombine(weights / weights.sum(), phi, derive_seed(seed, 0xa2c6));

  HyperMeasure out;
  out.layout = layout;
  out.samples.resize(static_cast<Eigen::Index>(reduced.indices.size()), samples.cols());
  for (std::size_t k = 0; k < reduced.indices.size(); ++k) {
    out.samples.row(static_cast<Eigen::Index>(k)) =
        samples.row(static_cast<Eigen::Index>(reduced.indices[k]));
  }
  out.weights = reduced.weights / reduced.weights.sum();
  return out;
}

namespace {

/// Anchors + Nystrom features + recombination. Used by both qd routes.
HyperMeasure distill(const Matrix& samples, const Vector& weights, const HyperLayout& layout,
                     const KernelParams& kernel_hyper, int h, std::uint64_t seed) {
  const int m = static_cast<int>(samples.rows());
  if (m <= h) {
    HyperMeasure out;
    out.layout = layout;
    out.samples = samples;
    out.weights = weights / weights.sum();
    return out;
  }

  // anchors: a uniform random subset of the candidate hypersamples
  const int n_anchors = std::min(m, std::max(6 * h, 128));
  Rng rng(derive_seed(seed, 0xa2c4));
  std::vector<std::size_t> order(static_cast<std::size_t>(m));
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(order);
  Matrix anchors(n_anchors, samples.cols());
  for (int i = 0; i < n_anchors; ++i) {
    anchors.row(i) = samples.row(static_cast<Eigen::Index>(order[static_cast<std::size_t>(i)]));
  }
  const NystromFeatures features =
      fit_nystrom(kernel_hyper, anchors, std::max(1, h - 1), 10, derive_seed(seed, 0xa2c5));
  return distill_hypersamples(samples, weights, layout, features, seed);
}

}  // namespace

HyperMeasure qd_mcmc(const Dataset& data, const HyperLayout& layout, const HyperPrior& hyperprior,
                     int m_samples, int h, const KernelParams& kernel_hyper, std::uint64_t seed,
                     const QdMcmcOptions& options) {
  if (m_samples < h) throw std::invalid_argument("qd_mcmc: m_samples must be >= h");
  const McmcChain chain = run_hyper_mcmc(data, layout, hyperprior, m_samples, seed, options);

  if (chain.acceptance < 0.01) {
    // chain effectively frozen; hand back a strided subset (duplicates merged)
    // with uniform weights
    HyperMeasure out;
    out.layout = layout;
    out.flagged = true;
    const int keep = std::min(m_samples, h);
    std::vector<Vector> rows;
    for (int i = 0; i < keep; ++i) {
      const Vector row = chain.samples.row(static_cast<Eigen::Index>(i * (m_samples / keep))).transpose();
      bool duplicate = false;
      for (const Vector& seen : rows) {
        if ((seen.array() == row.array()).all()) {
          duplicate = true;
          break;
        }
      }
      if (!duplicate) rows.push_back(row);
    }
    out.samples.resize(static_cast<Eigen::Index>(rows.size()), layout.log_hyper_dim());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      out.samples.row(static_cast<Eigen::Index>(i)) = rows[i].transpose();
    }
    out.weights = Vector::Constant(static_cast<Eigen::Index>(rows.size()),
                                   1.0 / static_cast<double>(rows.size()));
    return out;
  }

  const Vector uniform = Vector::Constant(m_samples, 1.0 / m_samples);
  return distill(chain.samples, uniform, layout, kernel_hyper, h, seed);
}

Vector bq_prior_weights(const GpModel& hyper_gp, const HyperPrior& hyperprior) {
  hyperprior.validate();
  if (hyper_gp.params().kind != KernelKind::RbfArd) {
    throw std::invalid_argument("bq_prior_weights: hyper-GP must use an RBF kernel");
  }
  const Matrix& theta_obs = hyper_gp.data().X;
  const Eigen::Index d = theta_obs.cols();
  if (hyperprior.mean.size() != d) {
    throw std::invalid_argument("bq_prior_weights: dimension mismatch");
  }

  // v sqrt|2 pi W| N(theta; mu, W + Sigma) with W = diag(lengthscales^2)
  const Vector w_diag = hyper_gp.params().lengthscales.array().square().matrix();
  Matrix s = hyperprior.covariance;
  s.diagonal() += w_diag;
  Eigen::LLT<Matrix> llt(s);
  if (llt.info() != Eigen::Success) throw CholeskyError("bq_prior_weights: W + Sigma not PD");
  const double log_det_s = 2.0 * Matrix(llt.matrixL()).diagonal().array().log().sum();
  const double log_det_w = w_diag.array().log().sum();

  Vector kernel_mean(theta_obs.rows());
  for (Eigen::Index i = 0; i < theta_obs.rows(); ++i) {
    const Vector diff = theta_obs.row(i).transpose() - hyperprior.mean;
    const Vector z = llt.matrixL().solve(diff);
    kernel_mean[i] = hyper_gp.params().variance *
                     std::exp(0.5 * (log_det_w - log_det_s) - 0.5 * z.squaredNorm());
  }
  return hyper_gp.solve_gram(kernel_mean);
}

HyperMeasure qd_bq(const Dataset& data, const HyperLayout& layout, const HyperPrior& hyperprior,
                   int m_samples, int h, std::uint64_t seed) {
  data.validate();
  hyperprior.validate();
  if (m_samples < h) throw std::invalid_argument("qd_bq: m_samples must be >= h");
  const int dim = layout.log_hyper_dim();
  if (hyperprior.mean.size() != dim) throw std::invalid_argument("qd_bq: hyperprior dim mismatch");

  // theta_obs ~ Pi'
  Rng rng(derive_seed(seed, 0xb9b9));
  Eigen::LLT<Matrix> prior_llt(hyperprior.covariance);
  const Matrix chol_l = prior_llt.matrixL();
  Matrix theta_obs(m_samples, dim);
  for (int i = 0; i < m_samples; ++i) {
    Vector z(dim);
    for (int k = 0; k < dim; ++k) z[k] = rng.normal();
    theta_obs.row(i) = (hyperprior.mean + chol_l * z).transpose();
  }

  // L_obs, rescaled by its maximum; the scale cancels in w_BQ
  Vector log_l(m_samples);
  for (int i = 0; i < m_samples; ++i) {
    try {
      log_l[i] = model_from_hypersample(data, theta_obs.row(i).transpose(), layout)
                     .log_marginal_likelihood();
    } catch (const CholeskyError&) {
      log_l[i] = -std::numeric_limits<double>::infinity();
    }
  }
  const double shift = log_l.maxCoeff();
  const Vector l_scaled = (log_l.array() - shift).exp().matrix();

  // hyper-GP on the scaled marginal likelihood surface
  Dataset hyper_data;
  hyper_data.X = theta_obs;
  hyper_data.y = l_scaled;
  MleOptions opts;
  opts.adam_steps = 80;
  const MleResult fit = fit_mle(hyper_data, KernelParams::rbf_iso(1.0, 1.0, dim), 1e-4, 3,
                                derive_seed(seed, 0xb9ba), opts);
  const GpModel& hyper_gp = fit.model;

  const Vector w_prior = bq_prior_weights(hyper_gp, hyperprior);
  const double denom = w_prior.dot(l_scaled);
  if (!(denom > 0.0) || !std::isfinite(denom)) {
    KernelParams fallback_kernel = KernelParams::rbf_iso(1.0, 1.0, dim);
    HyperMeasure out = qd_mcmc(data, layout, hyperprior, m_samples, h, fallback_kernel,
                               derive_seed(seed, 0xb9bb));
    out.flagged = true;
    return out;
  }

  Vector w_bq = w_prior.cwiseProduct(l_scaled) / denom;
  // recombination needs a probability measure; clip the (typically small)
  // negative BQ weights and renormalize
  w_bq = w_bq.cwiseMax(0.0);
  w_bq /= w_bq.sum();

  return distill(theta_obs, w_bq, layout, hyper_gp.params(), h, derive_seed(seed, 0xb9bc));
}

void attach_parabolic_etas(HyperMeasure& measure, const Vector& y, std::uint64_t seed) {
  measure.validate();
  if (measure.layout.has_eta) throw std::invalid_argument("attach_parabolic_etas: eta already present");
  const double ymax = y.maxCoeff();
  const double range = y.size() > 1 ? ymax - y.minCoeff() : 1.0;
  Rng rng(derive_seed(seed, 0xe7a));
  Matrix extended(measure.samples.rows(), measure.samples.cols() + 1);
  extended.leftCols(measure.samples.cols()) = measure.samples;
  for (Eigen::Index i = 0; i < extended.rows(); ++i) {
    extended(i, extended.cols() - 1) = ymax + std::abs(0.1 * std::max(range, 1e-12) * rng.normal());
  }
  measure.samples = std::move(extended);
  measure.layout.has_eta = true;
  measure.validate();
}

namespace {

struct EnsembleModels {
  std::vector<GpModel> models;
  std::vector<double> etas;  // parabolic eta per model when layout.has_eta
  Vector weights;
  bool dropped_any = false;
};

EnsembleModels build_models(const HyperMeasure& hm, const Dataset& data) {
  hm.validate();
  EnsembleModels out;
  std::vector<double> kept_weights;
  for (int i = 0; i < hm.size(); ++i) {
    const Vector theta = hm.samples.row(i).transpose();
    try {
      if (hm.layout.has_eta) {
        const double eta = theta[theta.size() - 1];
        // base GP on parabolic-warped observations, one per hypersample
        Vector packed = theta.head(hm.layout.log_hyper_dim());
        KernelParams params;
        params.kind = hm.layout.kind;
        if (hm.layout.kind == KernelKind::RbfArd) {
          params.lengthscales = packed.head(hm.layout.embedding_dim).array().exp().matrix();
          params.variance = std::exp(packed[hm.layout.embedding_dim]);
        } else {
          params.variance = std::exp(packed[0]);
        }
        const double noise = std::exp(packed[packed.size() - 1]);
        const double safe_eta = std::max(eta, data.y.size() > 0 ? data.y.maxCoeff() : eta);
        const WarpedGp warped = make_parabolic(data, safe_eta, params, noise);
        out.models.push_back(warped.base);
        out.etas.push_back(safe_eta);
      } else {
        out.models.push_back(model_from_hypersample(data, theta, hm.layout));
        out.etas.push_back(0.0);
      }
      kept_weights.push_back(hm.weights[i]);
    } catch (const CholeskyError&) {
      out.dropped_any = true;
    }
  }
  if (out.models.empty()) throw CholeskyError("fbgp: every hypersample failed to factorize");
  out.weights.resize(static_cast<Eigen::Index>(kept_weights.size()));
  for (std::size_t i = 0; i < kept_weights.size(); ++i) {
    out.weights[static_cast<Eigen::Index>(i)] = kept_weights[i];
  }
  out.weights /= out.weights.sum();
  return out;
}

}  // namespace

FbgpPrediction fbgp_predict(const HyperMeasure& hm, const Dataset& data, const Matrix& X) {
  if (hm.layout.has_eta) {
    throw std::invalid_argument("fbgp_predict: eta-extended ensembles predict via ensemble_predictions");
  }
  const EnsembleModels ensemble = build_models(hm, data);
  const int h = static_cast<int>(ensemble.models.size());
  const Eigen::Index p = X.rows();

  Matrix means(h, p);
  Matrix vars(h, p);
  for (int i = 0; i < h; ++i) {
    Vector m, v;
    ensemble.models[static_cast<std::size_t>(i)].predict_mean_var(X, &m, &v);
    means.row(i) = m.transpose();
    vars.row(i) = v.transpose();
  }

  FbgpPrediction out;
  out.dropped_any = ensemble.dropped_any;
  out.mean = means.transpose() * ensemble.weights;
  const Vector second = (vars + means.cwiseProduct(means)).transpose() * ensemble.weights;
  out.variance = (second - out.mean.cwiseProduct(out.mean)).cwiseMax(0.0);
  const Matrix centered = means.rowwise() - out.mean.transpose();
  out.covariance = centered.transpose() * ensemble.weights.asDiagonal() * centered;
  return out;
}

EnsemblePredictions ensemble_predictions(const HyperMeasure& hm, const Dataset& data,
                                         const Matrix& X, double default_eta) {
  const EnsembleModels ensemble = build_models(hm, data);
  EnsemblePredictions preds;
  const int h = static_cast<int>(ensemble.models.size());
  preds.weights = ensemble.weights;
  preds.etas.resize(h);
  preds.noise_variances.resize(h);
  for (int i = 0; i < h; ++i) {
    const GpModel& model = ensemble.models[static_cast<std::size_t>(i)];
    Vector m, v;
    if (hm.layout.has_eta) {
      WarpedGp warped;
      warped.base = model;
      warped.kind = WarpKind::Parabolic;
      warped.eta = ensemble.etas[static_cast<std::size_t>(i)];
      Matrix cov;
      predict_parabolic(warped, X, &m, &cov);
      v = cov.diagonal();
      preds.etas[i] = warped.eta;
    } else {
      model.predict_mean_var(X, &m, &v);
      preds.etas[i] = default_eta;
    }
    preds.noise_variances[i] = model.noise_variance();
    preds.means.push_back(std::move(m));
    preds.variances.push_back(std::move(v));
  }
  return preds;
}

CovarianceOp fbgp_covariance(const HyperMeasure& hm, const Dataset& data) {
  if (hm.layout.has_eta) {
    throw std::invalid_argument("fbgp_covariance: strip eta before building the covariance");
  }
  auto ensemble = std::make_shared<EnsembleModels>(build_models(hm, data));
  CovarianceOp op;
  op.cross = [ensemble](const Matrix& a, const Matrix& b) {
    const int h = static_cast<int>(ensemble->models.size());
    Matrix out = Matrix::Zero(a.rows(), b.rows());
    Matrix mean_a(h, a.rows()), mean_b(h, b.rows());
    for (int i = 0; i < h; ++i) {
      const double w = ensemble->weights[i];
      const GpModel& model = ensemble->models[static_cast<std::size_t>(i)];
      Matrix cov_ab = model.posterior_covariance().cross(a, b);
      out += w * cov_ab;
      Vector ma, mb;
      model.predict_mean_var(a, &ma, nullptr);
      model.predict_mean_var(b, &mb, nullptr);
      mean_a.row(i) = ma.transpose();
      mean_b.row(i) = mb.transpose();
    }
    const Vector bar_a = mean_a.transpose() * ensemble->weights;
    const Vector bar_b = mean_b.transpose() * ensemble->weights;
    const Matrix da = mean_a.rowwise() - bar_a.transpose();
    const Matrix db = mean_b.rowwise() - bar_b.transpose();
    out += da.transpose() * ensemble->weights.asDiagonal() * db;
    return out;
  };
  op.diag = [ensemble](const Matrix& a) {
    const int h = static_cast<int>(ensemble->models.size());
    Vector second = Vector::Zero(a.rows());
    Vector bar = Vector::Zero(a.rows());
    for (int i = 0; i < h; ++i) {
      const double w = ensemble->weights[i];
      Vector m, v;
      ensemble->models[static_cast<std::size_t>(i)].predict_mean_var(a, &m, &v);
      second += w * (v + m.cwiseProduct(m));
      bar += w * m;
    }
    return Vector((second - bar.cwiseProduct(bar)).cwiseMax(0.0));
  };
  return op;
}

}  // namespace sober
