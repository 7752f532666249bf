#include "sober/gp.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include "sober/random.hpp"

namespace sober {

namespace {
constexpr double kJitterStart = 1e-10;
constexpr double kJitterMax = 1e-4;
}  // namespace

void Dataset::validate() const {
  if (X.rows() != y.size()) throw std::invalid_argument("Dataset: X and y lengths differ");
  if (!y.allFinite()) throw std::invalid_argument("Dataset: observations must be finite");
  if (!X.allFinite()) throw std::invalid_argument("Dataset: points must be finite");
}

Dataset Dataset::appended(const Matrix& x_new, const Vector& y_new) const {
  if (x_new.rows() != y_new.size()) throw std::invalid_argument("Dataset::appended: shape mismatch");
  Dataset out;
  out.X.resize(X.rows() + x_new.rows(), x_new.cols());
  if (X.rows() > 0) out.X.topRows(X.rows()) = X;
  out.X.bottomRows(x_new.rows()) = x_new;
  out.y.resize(y.size() + y_new.size());
  if (y.size() > 0) out.y.head(y.size()) = y;
  out.y.tail(y_new.size()) = y_new;
  out.validate();
  return out;
}

Dataset make_dataset(const DomainSpec& domain, const std::vector<MixedPoint>& points, const Vector& y) {
  Dataset d;
  d.X = embed(domain, points);
  d.y = y;
  d.validate();
  return d;
}

struct GpModel::Core {
  Eigen::LLT<Matrix> llt;
  Vector alpha;        // (K + sigma^2 I)^-1 y
  double log_det = 0;  // log |K + sigma^2 I|
};

GpModel::GpModel(Dataset data, KernelParams params, double noise_variance)
    : data_(std::move(data)), params_(std::move(params)), noise_var_(noise_variance) {
  data_.validate();
  params_.validate();
  if (noise_var_ < 0.0 || !std::isfinite(noise_var_)) {
    throw std::invalid_argument("GpModel: noise variance must be non-negative");
  }
  if (data_.size() == 0) return;

  const Matrix k = gram(params_, data_.X, data_.X);
  auto core = std::make_shared<Core>();
  double jitter = 0.0;
  while (true) {
    Matrix ky = k;
    ky.diagonal().array() += noise_var_ + jitter;
    core->llt.compute(ky);
    if (core->llt.info() == Eigen::Success) break;
    jitter = jitter == 0.0 ? kJitterStart * params_.variance : jitter * 10.0;
    if (jitter > kJitterMax * params_.variance) {
      throw CholeskyError("GpModel: Cholesky failed after jitter escalation");
    }
  }
  jitter_ = jitter;
  core->alpha = core->llt.solve(data_.y);
  core->log_det = 2.0 * core->llt.matrixLLT().diagonal().array().log().sum();
  core_ = core;
}

void GpModel::predict(const Matrix& X, Vector* mean, Matrix* cov) const {
  const Matrix k_prior = gram(params_, X, X);
  if (empty()) {
    if (mean) *mean = Vector::Zero(X.rows());
    if (cov) *cov = k_prior;
    return;
  }
  const Matrix k_star = gram(params_, X, data_.X);  // q x m
  if (mean) *mean = k_star * core_->alpha;
  if (cov) {
    const Matrix v = core_->llt.solve(k_star.transpose());  // m x q
    Matrix c = k_prior - k_star * v;
    c = 0.5 * (c + c.transpose());
    c.diagonal() = c.diagonal().cwiseMax(0.0);
    *cov = std::move(c);
  }
}

void GpModel::predict_mean_var(const Matrix& X, Vector* mean, Vector* var) const {
  if (empty()) {
    if (mean) *mean = Vector::Zero(X.rows());
    if (var) *var = gram_diag(params_, X);
    return;
  }
  const Matrix k_star = gram(params_, X, data_.X);
  if (mean) *mean = k_star * core_->alpha;
  if (var) {
    const Matrix v = core_->llt.solve(k_star.transpose());
    Vector out = gram_diag(params_, X);
    out -= (k_star.array() * v.transpose().array()).rowwise().sum().matrix();
    *var = out.cwiseMax(0.0);
  }
}

double GpModel::log_marginal_likelihood() const {
  if (empty()) return 0.0;
  const double m = static_cast<double>(data_.size());
  return -0.5 * data_.y.dot(core_->alpha) - 0.5 * core_->log_det - 0.5 * m * std::log(2.0 * M_PI);
}

Vector GpModel::log_marginal_likelihood_gradient() const {
  const int d = static_cast<int>(params_.lengthscales.size());
  const int n_hyper = (params_.kind == KernelKind::RbfArd ? d : 0) + 2;
  if (empty()) return Vector::Zero(n_hyper);

  const int m = data_.size();
  const Matrix k_noiseless = gram(params_, data_.X, data_.X);
  const Matrix k_inv = core_->llt.solve(Matrix::Identity(m, m));
  // A = alpha alpha^T - (K + sigma^2 I)^-1; dL/dtheta = tr(A dK/dtheta) / 2
  const Matrix a = core_->alpha * core_->alpha.transpose() - k_inv;

  Vector grad(n_hyper);
  int idx = 0;
  const Matrix ak = a.cwiseProduct(k_noiseless);
  if (params_.kind == KernelKind::RbfArd) {
    // dK/dlog l_k = K .* D_k with D_k(i,j) = (x_ik - x_jk)^2 / l_k^2.
    // sum_ij M_ij (x_ik - x_jk)^2 = 2 (r^T xk2 - xk^T M xk) for symmetric M.
    const Vector r = ak.rowwise().sum();
    const Matrix t = ak * data_.X;  // m x d
    for (int k = 0; k < d; ++k) {
      const auto xk = data_.X.col(k);
      const double sum_sq = 2.0 * (r.dot(xk.cwiseProduct(xk)) - xk.dot(t.col(k)));
      grad[idx++] = 0.5 * sum_sq / (params_.lengthscales[k] * params_.lengthscales[k]);
    }
  }
  grad[idx++] = 0.5 * ak.sum();                          // log v
  grad[idx++] = 0.5 * noise_var_ * a.diagonal().sum();   // log sigma_n^2
  return grad;
}

CovarianceOp GpModel::posterior_covariance() const {
  const KernelParams params = params_;
  if (empty()) return kernel_op(params);
  const Matrix x_obs = data_.X;
  const auto core = core_;
  CovarianceOp op;
  op.cross = [params, x_obs, core](const Matrix& a, const Matrix& b) {
    const Matrix ka = gram(params, a, x_obs);
    const Matrix kb = gram(params, x_obs, b);
    return Matrix(gram(params, a, b) - ka * core->llt.solve(kb));
  };
  op.diag = [params, x_obs, core](const Matrix& a) {
    const Matrix ka = gram(params, a, x_obs);
    const Matrix v = core->llt.solve(ka.transpose());
    Vector out = gram_diag(params, a);
    out -= (ka.array() * v.transpose().array()).rowwise().sum().matrix();
    return Vector(out.cwiseMax(0.0));
  };
  return op;
}

Vector GpModel::alpha() const {
  if (empty()) return Vector(0);
  return core_->alpha;
}

Matrix GpModel::solve_gram(const Matrix& rhs) const {
  if (empty()) throw std::invalid_argument("GpModel::solve_gram: empty dataset");
  return core_->llt.solve(rhs);
}

Vector GpModel::pack_log_hyperparameters() const {
  const int d = static_cast<int>(params_.lengthscales.size());
  Vector packed(d + 2);
  for (int i = 0; i < d; ++i) packed[i] = std::log(params_.lengthscales[i]);
  packed[d] = std::log(params_.variance);
  packed[d + 1] = std::log(std::max(noise_var_, 1e-300));
  return packed;
}

GpModel GpModel::from_log_hyperparameters(const Dataset& data, const Vector& packed, KernelKind kind,
                                          int embedding_dim) {
  KernelParams p;
  p.kind = kind;
  if (kind == KernelKind::RbfArd) {
    if (packed.size() != embedding_dim + 2) {
      throw std::invalid_argument("from_log_hyperparameters: bad packed size");
    }
    p.lengthscales = packed.head(embedding_dim).array().exp().matrix();
    p.variance = std::exp(packed[embedding_dim]);
    return GpModel(data, p, std::exp(packed[embedding_dim + 1]));
  }
  if (packed.size() != 2) throw std::invalid_argument("from_log_hyperparameters: bad packed size");
  p.variance = std::exp(packed[0]);
  return GpModel(data, p, std::exp(packed[1]));
}

namespace {

struct HyperBox {
  Vector lo, hi;
};

HyperBox hyper_box(const MleOptions& opt, KernelKind kind, int dims) {
  const int d = kind == KernelKind::RbfArd ? dims : 0;
  HyperBox box;
  box.lo.resize(d + 2);
  box.hi.resize(d + 2);
  for (int i = 0; i < d; ++i) {
    box.lo[i] = opt.log_lengthscale_min;
    box.hi[i] = opt.log_lengthscale_max;
  }
  box.lo[d] = opt.log_variance_min;
  box.hi[d] = opt.log_variance_max;
  box.lo[d + 1] = opt.log_noise_min;
  box.hi[d + 1] = opt.log_noise_max;
  return box;
}

Vector project(const Vector& x, const HyperBox& box) {
  return x.cwiseMax(box.lo).cwiseMin(box.hi);
}

}  // namespace

MleResult fit_mle(const Dataset& data, const KernelParams& init, double init_noise_variance,
                  int restarts, std::uint64_t seed, const MleOptions& options) {
  data.validate();
  init.validate();
  if (data.size() < 2) throw std::invalid_argument("fit_mle: need at least 2 observations");
  if (restarts < 0) throw std::invalid_argument("fit_mle: restarts must be >= 0");

  const int dims = static_cast<int>(data.X.cols());
  const KernelKind kind = init.kind;
  const HyperBox box = hyper_box(options, kind, dims);
  const int n_hyper = static_cast<int>(box.lo.size());
  const bool noise_fixed = options.fixed_noise_variance.has_value();
  const double fixed_noise = noise_fixed ? *options.fixed_noise_variance : 0.0;

  const auto evaluate = [&](const Vector& packed, GpModel* model) -> double {
    Vector full = packed;
    if (noise_fixed) full[n_hyper - 1] = std::log(std::max(fixed_noise, 1e-300));
    *model = GpModel::from_log_hyperparameters(data, full, kind, dims);
    return model->log_marginal_likelihood();
  };

  Vector init_packed = GpModel(Dataset{Matrix(0, dims), Vector(0)}, init,
                               std::max(init_noise_variance, 1e-12))
                           .pack_log_hyperparameters();
  init_packed = project(init_packed, box);

  struct Best {
    double value = -std::numeric_limits<double>::infinity();
    GpModel model;
    bool valid = false;
  } best;

  for (int restart = 0; restart <= restarts; ++restart) {
    Vector x = init_packed;
    if (restart > 0) {
      Rng rng(derive_seed(seed, 0x6d1e, static_cast<std::uint64_t>(restart)));
      for (int i = 0; i < n_hyper; ++i) x[i] = rng.uniform(box.lo[i], box.hi[i]);
    }

    Vector m = Vector::Zero(n_hyper), v = Vector::Zero(n_hyper);
    double local_best = -std::numeric_limits<double>::infinity();
    GpModel local_model;
    bool local_valid = false;

    for (int step = 0; step < options.adam_steps; ++step) {
      GpModel model;
      double value = 0.0;
      Vector grad;
      try {
        value = evaluate(x, &model);
        grad = model.log_marginal_likelihood_gradient();
      } catch (const CholeskyError&) {
        break;  // leave this restart at its best point so far
      }
      if (std::isfinite(value) && value > local_best) {
        local_best = value;
        local_model = model;
        local_valid = true;
      }
      if (noise_fixed) grad[n_hyper - 1] = 0.0;
      if (grad.norm() < 1e-8) break;

      const double b1 = 0.9, b2 = 0.999;
      m = b1 * m + (1.0 - b1) * grad;
      v = b2 * v + (1.0 - b2) * grad.cwiseProduct(grad);
      const double t = static_cast<double>(step + 1);
      const Vector m_hat = m / (1.0 - std::pow(b1, t));
      const Vector v_hat = v / (1.0 - std::pow(b2, t));
      x += options.learning_rate *
           (m_hat.array() / (v_hat.array().sqrt() + 1e-8)).matrix();  // ascent
      x = project(x, box);
    }

    if (local_valid && local_best > best.value) {
      best.value = local_best;
      best.model = local_model;
      best.valid = true;
    }
  }

  MleResult result;
  if (best.valid) {
    result.model = best.model;
    result.log_marginal = best.value;
    result.success = true;
  } else {
    result.model = GpModel(data, init, std::max(init_noise_variance, 0.0));
    result.log_marginal = result.model.log_marginal_likelihood();
    result.success = false;
  }
  return result;
}

double default_parabolic_eta(const Vector& y) {
  const double ymax = y.maxCoeff();
  const double range = ymax - y.minCoeff();
  return ymax + 1e-6 * (range > 0.0 ? range : 1.0);
}

WarpedGp make_parabolic(const Dataset& raw, double eta, const KernelParams& params,
                        double noise_variance) {
  raw.validate();
  if (eta < raw.y.maxCoeff()) {
    throw std::invalid_argument("make_parabolic: eta must be >= max(y_obs)");
  }
  Dataset warped = raw;
  warped.y = (2.0 * (eta - raw.y.array())).sqrt().matrix();
  WarpedGp out;
  out.base = GpModel(warped, params, noise_variance);
  out.kind = WarpKind::Parabolic;
  out.eta = eta;
  return out;
}

WarpedGp make_mmlt(const Dataset& raw, const KernelParams& params, double noise_variance,
                   MmltCovariance covariance) {
  raw.validate();
  if ((raw.y.array() <= -1.0).any()) {
    throw std::invalid_argument("make_mmlt: requires y > -1 everywhere");
  }
  Dataset warped = raw;
  warped.y = (raw.y.array() + 1.0).log().matrix();
  WarpedGp out;
  out.base = GpModel(warped, params, noise_variance);
  out.kind = WarpKind::Mmlt;
  out.mmlt_covariance = covariance;
  return out;
}

void predict_parabolic(const WarpedGp& warped, const Matrix& X, Vector* mean, Matrix* cov) {
  if (warped.kind != WarpKind::Parabolic) {
    throw std::invalid_argument("predict_parabolic: warp kind mismatch");
  }
  Vector mg;
  Matrix cg;
  warped.base.predict(X, &mg, &cg);
  if (mean) {
    *mean = warped.eta - 0.5 * (mg.array().square() + cg.diagonal().array());
  }
  if (cov) {
    Matrix c = 0.5 * cg.cwiseProduct(cg) + mg.asDiagonal() * cg * mg.asDiagonal();
    c.diagonal() = c.diagonal().cwiseMax(0.0);
    *cov = std::move(c);
  }
}

void predict_mmlt(const WarpedGp& warped, const Matrix& X, Vector* mean, Matrix* cov) {
  if (warped.kind != WarpKind::Mmlt) {
    throw std::invalid_argument("predict_mmlt: warp kind mismatch");
  }
  Vector mg;
  Matrix cg;
  warped.base.predict(X, &mg, &cg);
  const Vector m = (mg.array() + 0.5 * cg.diagonal().array()).exp().matrix();
  if (mean) *mean = m;
  if (cov) {
    Matrix c;
    if (warped.mmlt_covariance == MmltCovariance::AsPrinted) {
      c = mg.asDiagonal() * (cg.array() - 1.0).matrix() * mg.asDiagonal();
    } else {
      c = m.asDiagonal() * (cg.array().exp() - 1.0).matrix() * m.asDiagonal();
    }
    c.diagonal() = c.diagonal().cwiseMax(0.0);
    *cov = std::move(c);
  }
}

double gaussian_bq_mean(const GpModel& model, const Vector& mu, const Vector& sigma2) {
  if (model.params().kind != KernelKind::RbfArd) {
    throw std::invalid_argument("gaussian_bq_mean: closed form requires RBF kernel");
  }
  if (model.empty()) return 0.0;
  const Matrix& x = model.data().X;
  if (mu.size() != x.cols() || sigma2.size() != x.cols()) {
    throw std::invalid_argument("gaussian_bq_mean: measure dimension mismatch");
  }
  const Vector w = model.params().lengthscales.array().square().matrix();  // W diag
  // sqrt|2 pi W| N(x_i; mu, W + Sigma) = prod_d sqrt(W_d / (W_d + S_d)) exp(-(x_id-mu_d)^2 / (2 (W_d+S_d)))
  Vector z(x.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    double log_term = 0.0;
    for (Eigen::Index d = 0; d < x.cols(); ++d) {
      const double s = w[d] + sigma2[d];
      const double diff = x(i, d) - mu[d];
      log_term += 0.5 * std::log(w[d] / s) - 0.5 * diff * diff / s;
    }
    z[i] = std::exp(log_term);
  }
  return model.params().variance * z.dot(model.alpha());
}

}  // namespace sober
