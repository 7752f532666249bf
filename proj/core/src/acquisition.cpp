#include "sober/acquisition.hpp"

#include <cmath>
#include <stdexcept>

namespace sober {

namespace {

constexpr double kSdFloor = 1e-150;
constexpr double kInvSqrt2Pi = 0.3989422804014327;

double normal_cdf(double z) { return 0.5 * std::erfc(-z * M_SQRT1_2); }
double normal_pdf(double z) { return kInvSqrt2Pi * std::exp(-0.5 * z * z); }

}  // namespace

void AfSpec::validate() const {
  if (beta < 0.0) throw std::invalid_argument("AfSpec: beta must be >= 0");
}

void EnsemblePredictions::validate() const {
  const int h = ensemble_size();
  if (h == 0) throw std::invalid_argument("EnsemblePredictions: empty ensemble");
  if (static_cast<int>(variances.size()) != h || weights.size() != h || etas.size() != h ||
      noise_variances.size() != h) {
    throw std::invalid_argument("EnsemblePredictions: inconsistent ensemble sizes");
  }
  const Eigen::Index p = means.front().size();
  for (int i = 0; i < h; ++i) {
    if (means[i].size() != p || variances[i].size() != p) {
      throw std::invalid_argument("EnsemblePredictions: prediction length mismatch");
    }
    if (!means[i].allFinite() || !variances[i].allFinite()) {
      throw std::invalid_argument("EnsemblePredictions: non-finite predictions");
    }
  }
  if (std::abs(weights.sum() - 1.0) > 1e-9 || (weights.array() < 0.0).any()) {
    throw std::invalid_argument("EnsemblePredictions: weights must be a distribution");
  }
}

EnsemblePredictions EnsemblePredictions::single(Vector mean, Vector variance, double eta,
                                                double noise_variance) {
  EnsemblePredictions e;
  e.means.push_back(std::move(mean));
  e.variances.push_back(std::move(variance));
  e.weights = Vector::Constant(1, 1.0);
  e.etas = Vector::Constant(1, eta);
  e.noise_variances = Vector::Constant(1, noise_variance);
  return e;
}

Vector eval_af(const AfSpec& spec, const EnsemblePredictions& ensemble) {
  spec.validate();
  ensemble.validate();
  const int h = ensemble.ensemble_size();
  const Eigen::Index p = ensemble.means.front().size();

  switch (spec.kind) {
    case AfKind::None:
      return Vector::Zero(p);

    case AfKind::Lfi: {
      Vector out = Vector::Zero(p);
      for (int i = 0; i < h; ++i) {
        for (Eigen::Index k = 0; k < p; ++k) {
          const double sd = std::sqrt(std::max(ensemble.variances[i][k], 1e-12));
          out[k] += ensemble.weights[i] * normal_cdf((ensemble.means[i][k] - ensemble.etas[i]) / sd);
        }
      }
      return out;
    }

    case AfKind::Ei: {
      Vector out = Vector::Zero(p);
      for (int i = 0; i < h; ++i) {
        for (Eigen::Index k = 0; k < p; ++k) {
          const double gap = ensemble.means[i][k] - ensemble.etas[i];
          const double sd = std::sqrt(std::max(ensemble.variances[i][k], 0.0));
          double ei = 0.0;
          if (sd < kSdFloor) {
            ei = std::max(gap, 0.0);
          } else {
            const double z = gap / sd;
            ei = gap * normal_cdf(z) + sd * normal_pdf(z);
          }
          out[k] += ensemble.weights[i] * ei;
        }
      }
      return out.cwiseMax(0.0);
    }

    case AfKind::Ucb: {
      Vector out = Vector::Zero(p);
      const double root_beta = std::sqrt(spec.beta);
      for (int i = 0; i < h; ++i) {
        out += ensemble.weights[i] *
               (ensemble.means[i] + root_beta * ensemble.variances[i].cwiseMax(0.0).cwiseSqrt());
      }
      return out;
    }

    case AfKind::MesFitbo: {
      // moment-matched entropy of the mixture minus the mean conditional entropy
      Vector mix_mean = Vector::Zero(p);
      Vector second = Vector::Zero(p);
      Vector cond = Vector::Zero(p);
      double mean_noise = 0.0;
      for (int i = 0; i < h; ++i) {
        const double w = ensemble.weights[i];
        const double noise = std::max(ensemble.noise_variances[i], 0.0);
        mean_noise += w * noise;
        mix_mean += w * ensemble.means[i];
        second += w * (ensemble.variances[i] + ensemble.means[i].cwiseProduct(ensemble.means[i]));
        cond += w * (2.0 * M_PI * M_E *
                     (ensemble.variances[i].array() + noise).max(1e-300))
                        .log()
                        .matrix();
      }
      const Vector var_y = (second - mix_mean.cwiseProduct(mix_mean)).cwiseMax(0.0);
      Vector out(p);
      for (Eigen::Index k = 0; k < p; ++k) {
        out[k] = 0.5 * std::log(2.0 * M_PI * M_E * std::max(var_y[k] + mean_noise, 1e-300)) -
                 0.5 * cond[k];
      }
      return out;
    }

    case AfKind::Bqbc: {
      Vector mix_mean = Vector::Zero(p);
      for (int i = 0; i < h; ++i) mix_mean += ensemble.weights[i] * ensemble.means[i];
      Vector out = Vector::Zero(p);
      for (int i = 0; i < h; ++i) {
        const Vector d = ensemble.means[i] - mix_mean;
        out += ensemble.weights[i] * d.cwiseProduct(d);
      }
      return out;
    }

    case AfKind::QbMgp: {
      AfSpec bqbc = spec;
      bqbc.kind = AfKind::Bqbc;
      Vector out = eval_af(bqbc, ensemble);
      for (int i = 0; i < h; ++i) out += ensemble.weights[i] * ensemble.variances[i].cwiseMax(0.0);
      return out;
    }
  }
  throw std::invalid_argument("eval_af: unknown acquisition kind");
}

Vector normalize_af(const Vector& values) {
  if (values.size() == 0) return values;
  const double lo = values.minCoeff();
  const double hi = values.maxCoeff();
  if (!(hi > lo)) return Vector::Zero(values.size());
  return ((values.array() - lo) / (hi - lo)).matrix();
}

}  // namespace sober
