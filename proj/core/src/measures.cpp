#include "sober/measures.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "sober/random.hpp"

namespace sober {

namespace {
constexpr double kWeightClamp = 1e-4;
constexpr double kDensityFloor = 1e-300;
constexpr double kInvSqrt2Pi = 0.3989422804014327;
}  // namespace

void EmpiricalMeasure::validate() const {
  if (points.empty()) throw std::invalid_argument("EmpiricalMeasure: needs at least one point");
  if (static_cast<int>(points.size()) != weights.size()) {
    throw std::invalid_argument("EmpiricalMeasure: points/weights length mismatch");
  }
  if ((weights.array() < 0.0).any()) {
    throw std::invalid_argument("EmpiricalMeasure: negative weight");
  }
  if (std::abs(weights.sum() - 1.0) > 1e-12 * std::max(1.0, weights.size() * 1.0)) {
    throw std::invalid_argument("EmpiricalMeasure: weights must sum to 1");
  }
}

EmpiricalMeasure make_measure(const DomainSpec& domain, std::vector<MixedPoint> points,
                              Vector weights) {
  EmpiricalMeasure m;
  m.points = std::move(points);
  m.weights = std::move(weights);
  m.embedded = embed(domain, m.points);
  m.validate();
  return m;
}

void PriorModel::validate(const DomainSpec& domain) const {
  if (static_cast<int>(categorical.size()) != domain.categorical_dims()) {
    throw std::invalid_argument("PriorModel: categorical block count mismatch");
  }
  for (int i = 0; i < domain.categorical_dims(); ++i) {
    if (categorical[i].size() != domain.categorical_classes[i]) {
      throw std::invalid_argument("PriorModel: categorical class count mismatch");
    }
    if ((categorical[i].array() < 0.0).any() || std::abs(categorical[i].sum() - 1.0) > 1e-9) {
      throw std::invalid_argument("PriorModel: categorical weights must be a distribution");
    }
  }
  if (bernoulli.size() != domain.binary) {
    throw std::invalid_argument("PriorModel: bernoulli block count mismatch");
  }
  for (Eigen::Index i = 0; i < bernoulli.size(); ++i) {
    if (!(bernoulli[i] > 0.0 && bernoulli[i] < 1.0)) {
      throw std::invalid_argument("PriorModel: bernoulli weights must lie in (0, 1)");
    }
  }
}

PriorModel uniform_prior(const DomainSpec& domain) {
  domain.validate();
  PriorModel prior;
  prior.continuous = UniformBlock{};
  for (int classes : domain.categorical_classes) {
    prior.categorical.push_back(Vector::Constant(classes, 1.0 / classes));
  }
  prior.bernoulli = Vector::Constant(domain.binary, 0.5);
  return prior;
}

namespace {

Vector sample_continuous(const PriorModel& prior, const DomainSpec& domain, Rng& rng) {
  const int d = domain.continuous_dims();
  Vector x(d);
  if (std::holds_alternative<UniformBlock>(prior.continuous)) {
    for (int i = 0; i < d; ++i) {
      x[i] = rng.uniform(domain.continuous[i].lower, domain.continuous[i].upper);
    }
    return x;
  }
  if (const auto* g = std::get_if<GaussianBlock>(&prior.continuous)) {
    for (int i = 0; i < d; ++i) x[i] = g->mean[i] + std::sqrt(g->variance[i]) * rng.normal();
  } else {
    const auto& kde = std::get<KdeBlock>(prior.continuous);
    std::vector<double> w(kde.weights.data(), kde.weights.data() + kde.weights.size());
    const std::size_t comp = rng.categorical(w);
    for (int i = 0; i < d; ++i) {
      x[i] = kde.points(static_cast<Eigen::Index>(comp), i) + kde.bandwidth[i] * rng.normal();
    }
  }
  for (int i = 0; i < d; ++i) {
    x[i] = std::clamp(x[i], domain.continuous[i].lower, domain.continuous[i].upper);
  }
  return x;
}

double continuous_density(const PriorModel& prior, const DomainSpec& domain, const Vector& x) {
  const int d = domain.continuous_dims();
  if (d == 0) return 1.0;
  if (std::holds_alternative<UniformBlock>(prior.continuous)) {
    double vol = 1.0;
    for (const auto& c : domain.continuous) vol *= c.upper - c.lower;
    return 1.0 / vol;
  }
  if (const auto* g = std::get_if<GaussianBlock>(&prior.continuous)) {
    double log_p = 0.0;
    for (int i = 0; i < d; ++i) {
      const double diff = x[i] - g->mean[i];
      log_p += -0.5 * std::log(2.0 * M_PI * g->variance[i]) - 0.5 * diff * diff / g->variance[i];
    }
    return std::exp(log_p);
  }
  const auto& kde = std::get<KdeBlock>(prior.continuous);
  double density = 0.0;
  for (Eigen::Index i = 0; i < kde.points.rows(); ++i) {
    double log_comp = 0.0;
    for (int k = 0; k < d; ++k) {
      const double z = (x[k] - kde.points(i, k)) / kde.bandwidth[k];
      log_comp += std::log(kInvSqrt2Pi / kde.bandwidth[k]) - 0.5 * z * z;
    }
    density += kde.weights[i] * std::exp(log_comp);
  }
  return density;
}

}  // namespace

std::vector<MixedPoint> sample_prior(const PriorModel& prior, const DomainSpec& domain, int n,
                                     std::uint64_t seed) {
  domain.validate();
  prior.validate(domain);
  if (domain.enumerable) return domain.candidates;
  if (n < 1) throw std::invalid_argument("sample_prior: n must be >= 1");

  Rng rng(seed);
  std::vector<MixedPoint> out;
  out.reserve(n);
  for (int s = 0; s < n; ++s) {
    MixedPoint p;
    p.continuous = sample_continuous(prior, domain, rng);
    for (int i = 0; i < domain.categorical_dims(); ++i) {
      const auto& w = prior.categorical[i];
      std::vector<double> wv(w.data(), w.data() + w.size());
      p.category.push_back(static_cast<int>(rng.categorical(wv)));
    }
    for (int i = 0; i < domain.binary; ++i) {
      p.bits.push_back(rng.uniform() < prior.bernoulli[i] ? 1 : 0);
    }
    out.push_back(std::move(p));
  }
  return out;
}

Vector prior_density(const PriorModel& prior, const DomainSpec& domain,
                     const std::vector<MixedPoint>& points) {
  prior.validate(domain);
  Vector out(static_cast<Eigen::Index>(points.size()));
  for (std::size_t idx = 0; idx < points.size(); ++idx) {
    const MixedPoint& p = points[idx];
    double density = continuous_density(prior, domain, p.continuous);
    for (int i = 0; i < domain.categorical_dims(); ++i) {
      density *= prior.categorical[i][p.category[i]];
    }
    for (int i = 0; i < domain.binary; ++i) {
      density *= p.bits[i] == 1 ? prior.bernoulli[i] : 1.0 - prior.bernoulli[i];
    }
    out[static_cast<Eigen::Index>(idx)] = std::max(density, kDensityFloor);
  }
  return out;
}

Vector importance_weights(const Vector& l_values, const Vector& prior_density) {
  if (l_values.size() != prior_density.size()) {
    throw std::invalid_argument("importance_weights: length mismatch");
  }
  if ((l_values.array() < 0.0).any()) {
    throw std::invalid_argument("importance_weights: likelihood values must be non-negative");
  }
  if ((prior_density.array() <= 0.0).any()) {
    throw std::invalid_argument("importance_weights: prior density must be positive");
  }
  Vector w = l_values.cwiseQuotient(prior_density);
  const double total = w.sum();
  if (!(total > 0.0) || !std::isfinite(total)) {
    throw DegenerateMeasureError("importance_weights: all likelihood values are zero");
  }
  return w / total;
}

void weighted_moments(const Matrix& embedded, const Vector& weights, Vector* mean, Matrix* cov) {
  if (embedded.rows() != weights.size()) {
    throw std::invalid_argument("weighted_moments: shape mismatch");
  }
  if (embedded.rows() < 2) throw std::invalid_argument("weighted_moments: need N >= 2");
  const double sq = weights.squaredNorm();
  if (sq >= 1.0) throw std::invalid_argument("weighted_moments: all mass on one point");

  const Vector mu = embedded.transpose() * weights;
  if (mean) *mean = mu;
  if (cov) {
    const Matrix centered = embedded.rowwise() - mu.transpose();
    *cov = (centered.transpose() * weights.asDiagonal() * centered) / (1.0 - sq);
  }
}

void weighted_moments(const EmpiricalMeasure& measure, Vector* mean, Matrix* cov) {
  measure.validate();
  weighted_moments(measure.embedded, measure.weights, mean, cov);
}

PriorModel wkde_fit(const EmpiricalMeasure& measure, const DomainSpec& domain) {
  measure.validate();
  const int d = domain.continuous_dims();
  if (d == 0) throw std::invalid_argument("wkde_fit: domain has no continuous block");
  if (measure.size() < 2) throw std::invalid_argument("wkde_fit: need at least 2 points");

  Matrix xc(measure.size(), d);
  for (int i = 0; i < measure.size(); ++i) xc.row(i) = measure.points[i].continuous.transpose();

  bool distinct = false;
  for (Eigen::Index i = 1; i < xc.rows() && !distinct; ++i) {
    if ((xc.row(i) - xc.row(0)).norm() > 0.0) distinct = true;
  }
  if (!distinct) throw std::invalid_argument("wkde_fit: all points coincide");

  KdeBlock kde;
  kde.points = xc;
  kde.weights = measure.weights;
  kde.bandwidth.resize(d);

  const double n_eff = 1.0 / measure.weights.squaredNorm();
  const double scott = std::pow(n_eff, -1.0 / (d + 4.0));
  Vector mu;
  Matrix cov;
  bool degenerate = false;
  try {
    weighted_moments(xc, measure.weights, &mu, &cov);
  } catch (const std::invalid_argument&) {
    degenerate = true;
  }
  for (int k = 0; k < d; ++k) {
    const double var = degenerate ? 0.0 : cov(k, k);
    if (var > 0.0 && std::isfinite(var)) {
      kde.bandwidth[k] = std::sqrt(var) * scott;
    } else {
      kde.bandwidth[k] = 1e-3 * (domain.continuous[k].upper - domain.continuous[k].lower);
    }
  }

  PriorModel prior = uniform_prior(domain);
  prior.continuous = std::move(kde);
  return prior;
}

PriorModel mle_update_discrete(const PriorModel& prior, const EmpiricalMeasure& measure,
                               const DomainSpec& domain) {
  measure.validate();
  prior.validate(domain);
  if (domain.categorical_dims() == 0 && domain.binary == 0) {
    throw std::invalid_argument("mle_update_discrete: domain has no discrete block");
  }

  PriorModel out = prior;
  for (int dim = 0; dim < domain.categorical_dims(); ++dim) {
    Vector freq = Vector::Zero(domain.categorical_classes[dim]);
    for (int i = 0; i < measure.size(); ++i) {
      freq[measure.points[i].category[dim]] += measure.weights[i];
    }
    freq = freq.cwiseMax(kWeightClamp).cwiseMin(1.0 - kWeightClamp);
    out.categorical[dim] = freq / freq.sum();
  }
  for (int dim = 0; dim < domain.binary; ++dim) {
    double p = 0.0;
    for (int i = 0; i < measure.size(); ++i) {
      if (measure.points[i].bits[dim] == 1) p += measure.weights[i];
    }
    out.bernoulli[dim] = std::clamp(p, kWeightClamp, 1.0 - kWeightClamp);
  }
  return out;
}

SubsampleResult deweighted_subsample(const EmpiricalMeasure& measure, int m, std::uint64_t seed) {
  measure.validate();
  if (m < 1) throw std::invalid_argument("deweighted_subsample: m must be >= 1");
  if (m > measure.size()) throw std::invalid_argument("deweighted_subsample: m exceeds N");

  std::vector<std::size_t> positive;
  for (int i = 0; i < measure.size(); ++i) {
    if (measure.weights[i] > 0.0) positive.push_back(static_cast<std::size_t>(i));
  }

  SubsampleResult result;
  Rng rng(seed);

  // inverse weights, bounded so denormal weights cannot overflow the draw
  double w_max = 0.0;
  for (std::size_t k = 0; k < positive.size(); ++k) {
    w_max = std::max(w_max, measure.weights[static_cast<Eigen::Index>(positive[k])]);
  }
  const auto inverse_of = [&](std::size_t idx) {
    const double w = measure.weights[static_cast<Eigen::Index>(idx)];
    return w_max / std::max(w, 1e-12 * w_max);
  };

  if (static_cast<int>(positive.size()) < m) {
    // not enough support for a without-replacement draw
    result.with_replacement = true;
    std::vector<double> inv(positive.size());
    for (std::size_t k = 0; k < positive.size(); ++k) inv[k] = inverse_of(positive[k]);
    for (int s = 0; s < m; ++s) result.indices.push_back(positive[rng.categorical(inv)]);
  } else {
    std::vector<double> inv(positive.size());
    for (std::size_t k = 0; k < positive.size(); ++k) inv[k] = inverse_of(positive[k]);
    std::vector<std::size_t> alive(positive.size());
    std::iota(alive.begin(), alive.end(), 0);
    for (int s = 0; s < m; ++s) {
      std::vector<double> probs;
      probs.reserve(alive.size());
      for (std::size_t k : alive) probs.push_back(inv[k]);
      const std::size_t pick = rng.categorical(probs);
      result.indices.push_back(positive[alive[pick]]);
      alive.erase(alive.begin() + static_cast<std::ptrdiff_t>(pick));
    }
  }

  result.points.reserve(result.indices.size());
  for (std::size_t idx : result.indices) result.points.push_back(measure.points[idx]);
  return result;
}

namespace {

FingerprintSet finish_fingerprints(std::vector<std::vector<int>> bit_rows,
                                   std::vector<std::string> labels, std::vector<double> y_vals,
                                   bool has_y) {
  if (bit_rows.empty()) throw std::invalid_argument("fingerprints: empty file");
  const std::size_t d = bit_rows.front().size();
  if (d == 0) throw std::invalid_argument("fingerprints: zero-length bit vector");

  FingerprintSet set;
  set.domain.binary = static_cast<int>(d);
  set.domain.enumerable = true;
  for (std::size_t i = 0; i < bit_rows.size(); ++i) {
    if (bit_rows[i].size() != d) {
      throw std::invalid_argument("fingerprints: inconsistent bit widths");
    }
    MixedPoint p;
    p.bits = std::move(bit_rows[i]);
    for (int b : p.bits) {
      if (b != 0 && b != 1) throw std::invalid_argument("fingerprints: bits must be 0/1");
    }
    set.domain.candidates.push_back(std::move(p));
  }
  set.labels = std::move(labels);
  set.has_y = has_y;
  if (has_y) {
    set.y.resize(static_cast<Eigen::Index>(y_vals.size()));
    for (std::size_t i = 0; i < y_vals.size(); ++i) set.y[static_cast<Eigen::Index>(i)] = y_vals[i];
  }
  set.domain.validate();
  return set;
}

}  // namespace

FingerprintSet load_fingerprints_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_fingerprints_jsonl: cannot open " + path);

  std::vector<std::vector<int>> bit_rows;
  std::vector<std::string> labels;
  std::vector<double> y_vals;
  bool any_y = false;

  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r\n") == std::string::npos) continue;
    nlohmann::json record = nlohmann::json::parse(line);
    if (!record.contains("bits") || !record["bits"].is_array()) {
      throw std::invalid_argument("fingerprints: line " + std::to_string(line_no) +
                                  " missing \"bits\" array");
    }
    bit_rows.push_back(record["bits"].get<std::vector<int>>());
    labels.push_back(record.value("label", std::string{}));
    if (record.contains("y")) {
      any_y = true;
      y_vals.push_back(record["y"].get<double>());
    } else {
      y_vals.push_back(std::numeric_limits<double>::quiet_NaN());
    }
  }
  if (any_y) {
    for (double v : y_vals) {
      if (std::isnan(v)) throw std::invalid_argument("fingerprints: \"y\" present on some lines only");
    }
  }
  return finish_fingerprints(std::move(bit_rows), std::move(labels), std::move(y_vals), any_y);
}

FingerprintSet load_fingerprints_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_fingerprints_csv: cannot open " + path);

  std::string header;
  if (!std::getline(in, header)) throw std::invalid_argument("fingerprints: empty file");

  std::vector<std::string> columns;
  {
    std::stringstream ss(header);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
      while (!tok.empty() && (tok.back() == '\r' || tok.back() == ' ')) tok.pop_back();
      columns.push_back(tok);
    }
  }
  bool has_y = !columns.empty() && columns.back() == "y";
  const std::size_t n_bits = columns.size() - (has_y ? 1 : 0);
  for (std::size_t i = 0; i < n_bits; ++i) {
    if (columns[i] != "bit_" + std::to_string(i)) {
      throw std::invalid_argument("fingerprints: expected header bit_0,...,bit_{d-1}[,y]");
    }
  }

  std::vector<std::vector<int>> bit_rows;
  std::vector<double> y_vals;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r\n") == std::string::npos) continue;
    std::stringstream ss(line);
    std::string tok;
    std::vector<int> bits;
    double y = std::numeric_limits<double>::quiet_NaN();
    std::size_t col = 0;
    while (std::getline(ss, tok, ',')) {
      if (col < n_bits) {
        bits.push_back(std::stoi(tok));
      } else {
        y = std::stod(tok);
      }
      ++col;
    }
    if (bits.size() != n_bits || (has_y && std::isnan(y))) {
      throw std::invalid_argument("fingerprints: malformed CSV row");
    }
    bit_rows.push_back(std::move(bits));
    y_vals.push_back(y);
  }
  std::vector<std::string> labels(bit_rows.size());
  return finish_fingerprints(std::move(bit_rows), std::move(labels), std::move(y_vals), has_y);
}

}  // namespace sober
