#include "sober/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <future>
#include <map>
#include <numeric>
#include <sstream>
#include <thread>
#include <unordered_map>

#include <nlohmann/json.hpp>

#include "sober/random.hpp"

namespace sober {

namespace {

double nan() { return std::numeric_limits<double>::quiet_NaN(); }

// ---------------------------------------------------------------------------
// synthetic objectives

double ackley_negated(const Vector& x) {
  const double a = 20.0, b = 0.2, c = 2.0 * M_PI;
  const double d = static_cast<double>(x.size());
  const double rms = std::sqrt(x.squaredNorm() / d);
  double cos_term = 0.0;
  for (Eigen::Index i = 0; i < x.size(); ++i) cos_term += std::cos(c * x[i]);
  cos_term /= d;
  const double f = -a * std::exp(-b * rms) - std::exp(cos_term) + a + std::exp(1.0);
  return -f;
}

double rosenbrock_negated(const Vector& x) {
  double f = 0.0;
  for (Eigen::Index i = 0; i + 1 < x.size(); ++i) {
    const double gap = x[i + 1] - x[i] * x[i];
    f += 100.0 * gap * gap + (x[i] - 1.0) * (x[i] - 1.0);
  }
  return -f;
}

struct Hartmann6 {
  static constexpr double alpha[4] = {1.0, 1.2, 3.0, 3.2};
  static constexpr double a[4][6] = {{10, 3, 17, 3.5, 1.7, 8},
                                     {0.05, 10, 17, 0.1, 8, 14},
                                     {3, 3.5, 1.7, 10, 17, 8},
                                     {17, 8, 0.05, 10, 0.1, 14}};
  // the source prints raw 4-digit integers; the standard definition scales by 1e-4
  static constexpr double p[4][6] = {{0.1312, 0.1696, 0.5569, 0.0124, 0.8283, 0.5886},
                                     {0.2329, 0.4135, 0.8307, 0.3736, 0.1004, 0.9991},
                                     {0.2348, 0.1451, 0.3522, 0.2883, 0.3047, 0.6650},
                                     {0.4047, 0.8828, 0.8732, 0.5743, 0.1091, 0.0381}};

  static double value(const Vector& x) {  // maximization form
    double sum = 0.0;
    for (int i = 0; i < 4; ++i) {
      double inner = 0.0;
      for (int j = 0; j < 6; ++j) {
        const double diff = x[j] - p[i][j];
        inner += a[i][j] * diff * diff;
      }
      sum += alpha[i] * std::exp(-inner);
    }
    return sum;
  }
};

struct Shekel4 {
  static constexpr double beta[10] = {0.1, 0.2, 0.2, 0.4, 0.4, 0.6, 0.3, 0.7, 0.5, 0.5};
  static constexpr double c[4][10] = {{4, 1, 8, 6, 3, 2, 5, 8, 6, 7},
                                      {4, 1, 8, 6, 7, 9, 3, 1, 2, 3.6},
                                      {4, 1, 8, 6, 3, 2, 5, 8, 6, 7},
                                      {4, 1, 8, 6, 7, 9, 3, 1, 2, 3.6}};

  // standard reciprocal form, negated to a maximization objective
  static double value(const Vector& x) {
    double sum = 0.0;
    for (int i = 0; i < 10; ++i) {
      double inner = beta[i];
      for (int j = 0; j < 4; ++j) {
        const double diff = x[j] - c[j][i];
        inner += diff * diff;
      }
      sum += 1.0 / inner;
    }
    return sum;
  }

  // the formula as printed (no reciprocal), negated
  static double value_as_printed(const Vector& x) {
    double sum = 0.0;
    for (int i = 0; i < 10; ++i) {
      double inner = beta[i];
      for (int j = 0; j < 4; ++j) {
        const double diff = x[j] - c[j][i];
        inner += diff * diff;
      }
      sum += inner;
    }
    return sum;
  }
};

/// Local refinement of a maximum by projected coordinate-free ascent with a
/// central-difference gradient and adaptive step.
Vector refine_maximum(const std::function<double(const Vector&)>& f, Vector x, const Vector& lo,
                      const Vector& hi) {
  double step = 0.05;
  double fx = f(x);
  for (int it = 0; it < 400; ++it) {
    Vector grad(x.size());
    const double h = 1e-7;
    for (Eigen::Index k = 0; k < x.size(); ++k) {
      Vector xp = x, xm = x;
      xp[k] = std::min(hi[k], x[k] + h);
      xm[k] = std::max(lo[k], x[k] - h);
      grad[k] = (f(xp) - f(xm)) / (xp[k] - xm[k]);
    }
    const double norm = grad.norm();
    if (norm < 1e-12) break;
    Vector trial = (x + step * grad / norm).cwiseMax(lo).cwiseMin(hi);
    const double ft = f(trial);
    if (ft > fx) {
      x = trial;
      fx = ft;
      step *= 1.2;
    } else {
      step *= 0.5;
      if (step < 1e-12) break;
    }
  }
  return x;
}

constexpr double kRosenbrockLevels[4] = {-4.0, 1.0, 6.0, 11.0};

}  // namespace

ProblemKind parse_problem(const std::string& name) {
  if (name == "ackley") return ProblemKind::Ackley;
  if (name == "rosenbrock") return ProblemKind::Rosenbrock;
  if (name == "hartmann6") return ProblemKind::Hartmann6;
  if (name == "shekel4") return ProblemKind::Shekel4;
  if (name == "gaussian_bq") return ProblemKind::GaussianBq;
  if (name == "fingerprints") return ProblemKind::FingerprintFile;
  throw std::invalid_argument("unknown problem: " + name);
}

std::string problem_name(ProblemKind kind) {
  switch (kind) {
    case ProblemKind::Ackley: return "ackley";
    case ProblemKind::Rosenbrock: return "rosenbrock";
    case ProblemKind::Hartmann6: return "hartmann6";
    case ProblemKind::Shekel4: return "shekel4";
    case ProblemKind::GaussianBq: return "gaussian_bq";
    case ProblemKind::FingerprintFile: return "fingerprints";
  }
  throw std::invalid_argument("unknown problem kind");
}

double eval_objective(const Problem& problem, const MixedPoint& x) {
  validate_point(problem.domain, x);
  return problem.oracle(x);
}

Problem make_problem(ProblemKind kind, const ProblemOptions& options) {
  Problem problem;
  problem.kind = kind;
  problem.name = problem_name(kind);

  switch (kind) {
    case ProblemKind::Ackley: {
      if (options.ackley_continuous < 0 || options.ackley_binary < 0 ||
          options.ackley_continuous + options.ackley_binary < 1) {
        throw std::invalid_argument("ackley: bad dimensions");
      }
      for (int i = 0; i < options.ackley_continuous; ++i) {
        problem.domain.continuous.push_back({-1.0, 1.0});
      }
      problem.domain.binary = options.ackley_binary;
      problem.prior = uniform_prior(problem.domain);
      const int nc = options.ackley_continuous;
      const int nb = options.ackley_binary;
      problem.oracle = [nc, nb](const MixedPoint& p) {
        Vector x(nc + nb);
        for (int i = 0; i < nc; ++i) x[i] = p.continuous[i];
        for (int i = 0; i < nb; ++i) x[nc + i] = static_cast<double>(p.bits[i]);
        return ackley_negated(x);
      };
      MixedPoint opt;
      opt.continuous = Vector::Zero(nc);
      opt.bits.assign(static_cast<std::size_t>(nb), 0);
      problem.optimum = opt;
      problem.optimum_value = 0.0;
      break;
    }

    case ProblemKind::Rosenbrock: {
      problem.domain.continuous.push_back({-4.0, 11.0});
      problem.domain.categorical_classes.assign(6, 4);
      problem.prior = uniform_prior(problem.domain);
      problem.oracle = [](const MixedPoint& p) {
        Vector x(7);
        x[0] = p.continuous[0];
        for (int i = 0; i < 6; ++i) x[i + 1] = kRosenbrockLevels[p.category[i]];
        return rosenbrock_negated(x);
      };
      MixedPoint opt;
      opt.continuous = Vector::Constant(1, 1.0);
      opt.category.assign(6, 1);  // level value 1
      problem.optimum = opt;
      problem.optimum_value = 0.0;
      break;
    }

    case ProblemKind::Hartmann6: {
      for (int i = 0; i < 6; ++i) problem.domain.continuous.push_back({0.0, 1.0});
      problem.prior = uniform_prior(problem.domain);
      problem.oracle = [](const MixedPoint& p) { return Hartmann6::value(p.continuous); };
      Vector start(6);
      start << 0.20169, 0.150011, 0.476874, 0.275332, 0.311652, 0.6573;
      const Vector lo = Vector::Zero(6), hi = Vector::Ones(6);
      const Vector opt = refine_maximum(Hartmann6::value, start, lo, hi);
      MixedPoint optimum;
      optimum.continuous = opt;
      problem.optimum = optimum;
      problem.optimum_value = Hartmann6::value(opt);
      break;
    }

    case ProblemKind::Shekel4: {
      for (int i = 0; i < 4; ++i) problem.domain.continuous.push_back({0.0, 10.0});
      problem.prior = uniform_prior(problem.domain);
      if (options.shekel_as_printed) {
        problem.oracle = [](const MixedPoint& p) { return Shekel4::value_as_printed(p.continuous); };
        // separable and convex in each coordinate: the box maximum sits on a corner
        double best = -std::numeric_limits<double>::infinity();
        Vector best_x(4);
        for (int mask = 0; mask < 16; ++mask) {
          Vector corner(4);
          for (int j = 0; j < 4; ++j) corner[j] = (mask >> j) & 1 ? 10.0 : 0.0;
          const double value = Shekel4::value_as_printed(corner);
          if (value > best) {
            best = value;
            best_x = corner;
          }
        }
        MixedPoint optimum;
        optimum.continuous = best_x;
        problem.optimum = optimum;
        problem.optimum_value = best;
      } else {
        problem.oracle = [](const MixedPoint& p) { return Shekel4::value(p.continuous); };
        const Vector lo = Vector::Zero(4), hi = Vector::Constant(4, 10.0);
        const Vector opt = refine_maximum(Shekel4::value, Vector::Constant(4, 4.0), lo, hi);
        MixedPoint optimum;
        optimum.continuous = opt;
        problem.optimum = optimum;
        problem.optimum_value = Shekel4::value(opt);
      }
      break;
    }

    case ProblemKind::GaussianBq: {
      const int d = options.gaussian_bq_dim;
      if (d < 1) throw std::invalid_argument("gaussian_bq: dimension must be >= 1");
      for (int i = 0; i < d; ++i) problem.domain.continuous.push_back({-8.0, 8.0});
      GaussianBlock gaussian;
      gaussian.mean = Vector::Zero(d);
      gaussian.variance = Vector::Ones(d);
      problem.prior = uniform_prior(problem.domain);
      problem.prior.continuous = gaussian;
      const double s = 0.75;
      const Vector center = Vector::Constant(d, 0.5);
      problem.oracle = [center, s](const MixedPoint& p) {
        return std::exp(-(p.continuous - center).squaredNorm() / (2.0 * s * s));
      };
      problem.mode = SoberMode::Quadrature;
      MixedPoint optimum;
      optimum.continuous = center;
      problem.optimum = optimum;
      problem.optimum_value = 1.0;
      // product-of-Gaussians identity: int exp(-|x-c|^2/2s^2) N(x; mu, S) dx
      double truth = 1.0;
      for (int i = 0; i < d; ++i) {
        const double total = s * s + gaussian.variance[i];
        const double diff = center[i] - gaussian.mean[i];
        truth *= std::sqrt(s * s / total) * std::exp(-0.5 * diff * diff / total);
      }
      problem.evidence_truth = truth;
      break;
    }

    case ProblemKind::FingerprintFile: {
      if (options.fingerprint_path.empty()) {
        throw std::invalid_argument("fingerprints: path required");
      }
      FingerprintSet set = options.fingerprint_format == "csv"
                               ? load_fingerprints_csv(options.fingerprint_path)
                               : load_fingerprints_jsonl(options.fingerprint_path);
      if (!set.has_y) {
        throw std::invalid_argument("fingerprints: oracle mode needs a \"y\" field per candidate");
      }
      problem.domain = set.domain;
      problem.prior = uniform_prior(problem.domain);
      auto table = std::make_shared<std::unordered_map<std::string, double>>();
      auto key_of = [](const MixedPoint& p) {
        std::string key(p.bits.size(), '0');
        for (std::size_t i = 0; i < p.bits.size(); ++i) key[i] = p.bits[i] ? '1' : '0';
        return key;
      };
      Eigen::Index best_idx = 0;
      set.y.maxCoeff(&best_idx);
      for (std::size_t i = 0; i < set.domain.candidates.size(); ++i) {
        (*table)[key_of(set.domain.candidates[i])] = set.y[static_cast<Eigen::Index>(i)];
      }
      problem.oracle = [table, key_of](const MixedPoint& p) {
        const auto it = table->find(key_of(p));
        if (it == table->end()) throw std::invalid_argument("fingerprints: unknown candidate queried");
        return it->second;
      };
      problem.optimum = set.domain.candidates[static_cast<std::size_t>(best_idx)];
      problem.optimum_value = set.y[best_idx];
      break;
    }
  }

  problem.domain.validate();
  return problem;
}

BaselineKind parse_baseline(const std::string& name) {
  if (name == "random") return BaselineKind::Random;
  if (name == "plain_ts") return BaselineKind::PlainTs;
  throw std::invalid_argument("unknown baseline: " + name);
}

std::string baseline_name(BaselineKind kind) {
  return kind == BaselineKind::Random ? "random" : "plain_ts";
}

std::vector<MixedPoint> baseline_step(BaselineKind kind, const GpModel& gp,
                                      const EmpiricalMeasure& pool, int n, std::uint64_t seed) {
  pool.validate();
  if (n < 1) throw std::invalid_argument("baseline_step: n must be >= 1");

  if (kind == BaselineKind::Random) {
    // the pool rows are prior draws; pick n of them uniformly (distinct when possible)
    Rng rng(seed);
    std::vector<MixedPoint> out;
    if (pool.size() >= n) {
      std::vector<std::size_t> order(static_cast<std::size_t>(pool.size()));
      std::iota(order.begin(), order.end(), 0);
      rng.shuffle(order);
      for (int i = 0; i < n; ++i) out.push_back(pool.points[order[static_cast<std::size_t>(i)]]);
    } else {
      for (int i = 0; i < n; ++i) out.push_back(pool.points[rng.index(pool.points.size())]);
    }
    return out;
  }

  // plain TS: argmax of n independent approximate posterior samples
  const int anchor_count = std::min<int>(pool.size(), 256);
  const SubsampleResult anchors = deweighted_subsample(pool, anchor_count, derive_seed(seed, 0x15));
  Matrix anchor_rows(anchor_count, pool.embedded.cols());
  for (int i = 0; i < anchor_count; ++i) {
    anchor_rows.row(i) = pool.embedded.row(static_cast<Eigen::Index>(anchors.indices[i]));
  }
  const NystromFeatures features =
      fit_nystrom(gp.params(), anchor_rows, std::max(1, std::min(anchor_count, 64)), 10,
                  derive_seed(seed, 0x16));
  return ts_candidates(gp, features, pool, n, derive_seed(seed, 0x17));
}

std::vector<MetricsRow> compute_metrics(const std::vector<IterationRecord>& records,
                                        const Problem& problem, const std::string& method,
                                        int repeat) {
  const bool truth_known = std::isfinite(problem.optimum_value);
  Vector optimum_embedded;
  if (problem.optimum) optimum_embedded = embed(problem.domain, *problem.optimum);

  std::vector<MetricsRow> rows;
  rows.reserve(records.size());
  for (const auto& record : records) {
    MetricsRow row;
    row.method = method;
    row.repeat = repeat;
    row.iteration = record.iteration;
    row.best_y = record.best_y;
    if (truth_known) {
      row.simple_regret = problem.optimum_value - record.best_y;
      if (record.batch_weights.size() == record.y_batch.size() && record.y_batch.size() > 0) {
        row.bayes_regret = std::abs(problem.optimum_value - record.batch_weights.dot(record.y_batch));
      }
    }
    row.measure_variance = record.measure_variance;
    if (problem.optimum && record.measure_mean.size() == optimum_embedded.size()) {
      row.mean_distance = (optimum_embedded - record.measure_mean).norm();
    }
    row.wce = record.wce;
    row.evidence_mean = record.evidence_mean;
    row.evidence_var = record.evidence_var;
    if (std::isfinite(problem.evidence_truth) && std::isfinite(record.evidence_mean)) {
      row.evidence_error = std::abs(record.evidence_mean - problem.evidence_truth);
    }
    row.elapsed_s = record.cumulative_s;
    rows.push_back(std::move(row));
  }
  return rows;
}

void BenchmarkSpec::validate() const {
  if (repeats < 1) throw std::invalid_argument("BenchmarkSpec: repeats must be >= 1");
  if (iterations < 0) throw std::invalid_argument("BenchmarkSpec: negative iterations");
  config.validate();
}

namespace {

AfKind parse_af(const std::string& name) {
  if (name == "lfi") return AfKind::Lfi;
  if (name == "ei") return AfKind::Ei;
  if (name == "ucb") return AfKind::Ucb;
  if (name == "mes" || name == "fitbo" || name == "mes_fitbo") return AfKind::MesFitbo;
  if (name == "bqbc") return AfKind::Bqbc;
  if (name == "qb_mgp" || name == "qbmgp") return AfKind::QbMgp;
  if (name == "none") return AfKind::None;
  throw std::invalid_argument("unknown acquisition function: " + name);
}

std::string format_value(double v) {
  if (!std::isfinite(v)) return "";
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

double median_of(std::vector<double> values) {
  if (values.empty()) return nan();
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

double standard_error_of(const std::vector<double>& values) {
  if (values.size() < 2) return 0.0;
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / values.size();
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return std::sqrt(ss / (values.size() - 1)) / std::sqrt(static_cast<double>(values.size()));
}

/// Plain-TS and random baselines share SOBER's refit policy so wall-clock
/// comparisons stay fair.
std::vector<IterationRecord> run_baseline(BaselineKind kind, const Problem& problem,
                                          const SoberConfig& config, int iterations,
                                          std::uint64_t seed) {
  std::vector<IterationRecord> records;
  Dataset data;
  data.X.resize(0, problem.domain.embedding_dim());
  data.y.resize(0);
  KernelParams params = default_kernel_params(problem.domain);
  double noise = config.mle_options.fixed_noise_variance.value_or(1e-2);
  GpModel model(data, params, noise);

  double cumulative = 0.0;
  for (int t = 0; t < iterations; ++t) {
    const auto start = std::chrono::steady_clock::now();
    const std::uint64_t iter_seed = derive_seed(seed, 0xba5e, static_cast<std::uint64_t>(t));

    const int pool_size = problem.domain.enumerable
                              ? static_cast<int>(problem.domain.candidates.size())
                              : config.n_rec;
    std::vector<MixedPoint> pool_points =
        sample_prior(problem.prior, problem.domain, pool_size, derive_seed(iter_seed, 1));
    const Vector uniform = Vector::Constant(static_cast<Eigen::Index>(pool_points.size()),
                                            1.0 / static_cast<double>(pool_points.size()));
    const EmpiricalMeasure pool = make_measure(problem.domain, std::move(pool_points), uniform);

    std::vector<MixedPoint> batch =
        baseline_step(kind, model, pool, config.batch_size, derive_seed(iter_seed, 2));

    Vector y(static_cast<Eigen::Index>(batch.size()));
    for (std::size_t i = 0; i < batch.size(); ++i) {
      y[static_cast<Eigen::Index>(i)] = problem.oracle(batch[i]);
    }
    data = data.appended(embed(problem.domain, batch), y);

    if (kind == BaselineKind::PlainTs && data.size() >= 2) {
      // standardized fit, as in the solver; the TS argmax is affine-invariant
      Dataset standardized = data;
      const double mean = data.y.mean();
      const double var = (data.y.array() - mean).square().sum() / (data.size() - 1);
      const double scale = var > 1e-24 ? std::sqrt(var) : 1.0;
      standardized.y = ((data.y.array() - mean) / scale).matrix();
      const bool fresh = t % std::max(1, config.mle_fresh_every) == 0;
      MleOptions opts = config.mle_options;
      if (!fresh) opts.adam_steps = config.warm_adam_steps;
      if (opts.fixed_noise_variance) {
        opts.fixed_noise_variance = *opts.fixed_noise_variance / (scale * scale);
      }
      const MleResult fit = fit_mle(standardized, model.empty() ? params : model.params(),
                                    model.empty() ? noise : std::max(model.noise_variance(), 1e-8),
                                    fresh ? config.mle_restarts : 0, derive_seed(iter_seed, 3), opts);
      model = fit.model;
    } else if (kind == BaselineKind::PlainTs) {
      model = GpModel(data, model.empty() ? params : model.params(),
                      model.empty() ? noise : model.noise_variance());
    }

    IterationRecord record;
    record.iteration = t;
    record.batch_points = batch;
    record.batch_weights = Vector::Constant(static_cast<Eigen::Index>(batch.size()),
                                            1.0 / static_cast<double>(batch.size()));
    record.y_batch = y;
    record.best_y = data.y.maxCoeff();
    record.elapsed_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    cumulative += record.elapsed_s;
    record.cumulative_s = cumulative;
    records.push_back(std::move(record));
  }
  return records;
}

std::vector<MetricsRow> run_sober_once(const BenchmarkSpec& spec, int repeat, std::uint64_t seed) {
  const Problem problem = make_problem(spec.problem, spec.options);
  SoberConfig config = spec.config;
  config.seed = seed;
  config.mode = problem.mode;
  const std::string method = config.variant == PiVariant::Lfi ? "sober-lfi" : "sober-ts";
  SoberSolver solver(problem.domain, problem.prior, config);
  const RunResult result = solver.run_loop(problem.oracle, spec.iterations);
  return compute_metrics(result.records, problem, method, repeat);
}

std::vector<MetricsRow> run_baseline_once(const BenchmarkSpec& spec, BaselineKind kind, int repeat,
                                          std::uint64_t seed) {
  const Problem problem = make_problem(spec.problem, spec.options);
  const auto records = run_baseline(kind, problem, spec.config, spec.iterations, seed);
  return compute_metrics(records, problem, baseline_name(kind), repeat);
}

}  // namespace

BenchmarkSpec parse_benchmark_spec(const std::string& json_text) {
  const nlohmann::json j = nlohmann::json::parse(json_text);
  BenchmarkSpec spec;
  if (j.contains("problem")) spec.problem = parse_problem(j["problem"].get<std::string>());
  spec.repeats = j.value("repeats", spec.repeats);
  spec.iterations = j.value("iterations", spec.iterations);
  spec.run_sober = j.value("run_sober", true);
  spec.include_timings = j.value("timings", false);
  if (j.contains("baselines")) {
    for (const auto& b : j["baselines"]) spec.baselines.push_back(parse_baseline(b.get<std::string>()));
  }
  if (j.contains("ackley")) {
    spec.options.ackley_continuous = j["ackley"].value("continuous", spec.options.ackley_continuous);
    spec.options.ackley_binary = j["ackley"].value("binary", spec.options.ackley_binary);
  }
  spec.options.shekel_as_printed = j.value("shekel_as_printed", false);
  if (j.contains("gaussian_bq")) {
    spec.options.gaussian_bq_dim = j["gaussian_bq"].value("dim", spec.options.gaussian_bq_dim);
  }
  if (j.contains("fingerprints")) {
    spec.options.fingerprint_path = j["fingerprints"].get<std::string>();
    spec.options.fingerprint_format = j.value("fingerprint_format", std::string("jsonl"));
  }
  if (j.contains("sober")) {
    const auto& s = j["sober"];
    spec.config.n_rec = s.value("n_rec", spec.config.n_rec);
    spec.config.n_nystrom = s.value("n_nystrom", spec.config.n_nystrom);
    spec.config.batch_size = s.value("batch_size", spec.config.batch_size);
    if (s.contains("variant")) {
      const std::string v = s["variant"].get<std::string>();
      if (v == "lfi") {
        spec.config.variant = PiVariant::Lfi;
      } else if (v == "ts") {
        spec.config.variant = PiVariant::Ts;
      } else {
        throw std::invalid_argument("unknown variant: " + v);
      }
    }
    if (s.contains("af")) spec.config.acquisition.kind = parse_af(s["af"].get<std::string>());
    spec.config.acquisition.beta = s.value("af_beta", spec.config.acquisition.beta);
    spec.config.fbgp = s.value("fbgp", spec.config.fbgp);
    spec.config.fbgp_h = s.value("fbgp_h", spec.config.fbgp_h);
    if (s.contains("qd_method")) {
      const std::string q = s["qd_method"].get<std::string>();
      spec.config.qd_method = q == "mcmc" ? QdMethod::Mcmc : QdMethod::Bq;
    }
    spec.config.qd_samples = s.value("qd_samples", spec.config.qd_samples);
    spec.config.autokq = s.value("autokq", spec.config.autokq);
    spec.config.seed = s.value("seed", spec.config.seed);
    spec.config.mle_restarts = s.value("mle_restarts", spec.config.mle_restarts);
    spec.config.mle_fresh_every = s.value("mle_fresh_every", spec.config.mle_fresh_every);
    spec.config.warm_adam_steps = s.value("warm_adam_steps", spec.config.warm_adam_steps);
    spec.config.mle_options.adam_steps = s.value("adam_steps", spec.config.mle_options.adam_steps);
    if (s.contains("fixed_noise")) {
      spec.config.mle_options.fixed_noise_variance = s["fixed_noise"].get<double>();
    }
    spec.config.tanimoto_mean_weighted =
        s.value("tanimoto_mean_weighted", spec.config.tanimoto_mean_weighted);
    spec.config.ts_candidate_count = s.value("ts_candidate_count", spec.config.ts_candidate_count);
    spec.config.oracle_parallelism = s.value("oracle_parallelism", spec.config.oracle_parallelism);
  }
  spec.validate();
  return spec;
}

std::string metrics_csv_header() {
  return "method,repeat,iteration,best_y,simple_regret,BR,MV,MD,wce,evidence_mean,evidence_var,"
         "elapsed_s";
}

std::string metrics_csv_row(const MetricsRow& row) {
  std::ostringstream out;
  out << row.method << ',' << row.repeat << ',' << row.iteration << ',' << format_value(row.best_y)
      << ',' << format_value(row.simple_regret) << ',' << format_value(row.bayes_regret) << ','
      << format_value(row.measure_variance) << ',' << format_value(row.mean_distance) << ','
      << format_value(row.wce) << ',' << format_value(row.evidence_mean) << ','
      << format_value(row.evidence_var) << ',' << format_value(row.elapsed_s);
  return out.str();
}

BenchmarkResult run_benchmark(const BenchmarkSpec& spec) {
  spec.validate();

  struct Task {
    std::string method;
    int method_index;
    BaselineKind baseline;
    bool is_sober;
    int repeat;
  };
  std::vector<Task> tasks;
  int method_index = 0;
  if (spec.run_sober) {
    const std::string name = spec.config.variant == PiVariant::Lfi ? "sober-lfi" : "sober-ts";
    for (int r = 0; r < spec.repeats; ++r) {
      tasks.push_back({name, method_index, BaselineKind::Random, true, r});
    }
    ++method_index;
  }
  for (BaselineKind baseline : spec.baselines) {
    for (int r = 0; r < spec.repeats; ++r) {
      tasks.push_back({baseline_name(baseline), method_index, baseline, false, r});
    }
    ++method_index;
  }

  std::vector<std::vector<MetricsRow>> outputs(tasks.size());
  const unsigned workers = std::max(1u, std::thread::hardware_concurrency());
  for (std::size_t start = 0; start < tasks.size(); start += workers) {
    const std::size_t stop = std::min(tasks.size(), start + workers);
    std::vector<std::future<std::vector<MetricsRow>>> wave;
    for (std::size_t i = start; i < stop; ++i) {
      const Task& task = tasks[i];
      const std::uint64_t seed =
          derive_seed(spec.config.seed, 0xbe0c + static_cast<std::uint64_t>(task.method_index),
                      static_cast<std::uint64_t>(task.repeat));
      wave.push_back(std::async(std::launch::async, [&spec, task, seed]() {
        return task.is_sober ? run_sober_once(spec, task.repeat, seed)
                             : run_baseline_once(spec, task.baseline, task.repeat, seed);
      }));
    }
    for (std::size_t i = start; i < stop; ++i) outputs[i] = wave[i - start].get();
  }

  BenchmarkResult result;
  for (auto& rows : outputs) {
    result.rows.insert(result.rows.end(), rows.begin(), rows.end());
  }
  std::sort(result.rows.begin(), result.rows.end(), [](const MetricsRow& a, const MetricsRow& b) {
    return std::tie(a.method, a.repeat, a.iteration) < std::tie(b.method, b.repeat, b.iteration);
  });
  if (!spec.include_timings) {
    for (auto& row : result.rows) row.elapsed_s = nan();
  }

  std::ostringstream csv;
  csv << metrics_csv_header() << '\n';
  for (const auto& row : result.rows) csv << metrics_csv_row(row) << '\n';
  result.csv = csv.str();

  // summary: final-iteration statistics per method
  nlohmann::ordered_json summary;
  summary["problem"] = problem_name(spec.problem);
  summary["repeats"] = spec.repeats;
  summary["iterations"] = spec.iterations;
  nlohmann::ordered_json methods;
  std::map<std::string, std::vector<const MetricsRow*>> finals;
  for (const auto& row : result.rows) {
    if (row.iteration == spec.iterations - 1) finals[row.method].push_back(&row);
  }
  for (const auto& [method, rows] : finals) {
    std::vector<double> best, regret, log_regret, ev_err, elapsed;
    for (const MetricsRow* row : rows) {
      if (std::isfinite(row->best_y)) best.push_back(row->best_y);
      if (std::isfinite(row->simple_regret)) {
        regret.push_back(row->simple_regret);
        log_regret.push_back(std::log10(std::max(row->simple_regret, 1e-12)));
      }
      if (std::isfinite(row->evidence_error)) ev_err.push_back(row->evidence_error);
      if (std::isfinite(row->elapsed_s)) elapsed.push_back(row->elapsed_s);
    }
    nlohmann::ordered_json m;
    m["final_best_y"] = {{"median", median_of(best)}, {"standard_error", standard_error_of(best)}};
    if (!regret.empty()) {
      m["final_simple_regret"] = {{"median", median_of(regret)},
                                  {"standard_error", standard_error_of(regret)}};
      m["final_log10_simple_regret"] = {{"median", median_of(log_regret)},
                                        {"standard_error", standard_error_of(log_regret)}};
    }
    if (!ev_err.empty()) {
      m["final_evidence_error"] = {{"median", median_of(ev_err)},
                                   {"standard_error", standard_error_of(ev_err)}};
    }
    if (!elapsed.empty()) m["total_elapsed_s_median"] = median_of(elapsed);
    methods[method] = m;
  }
  summary["methods"] = methods;
  result.summary_json = summary.dump(2) + "\n";
  return result;
}

int write_benchmark_files(const BenchmarkResult& result, const std::string& out_dir) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  const auto csv_path = std::filesystem::path(out_dir) / "results.csv";
  const auto summary_path = std::filesystem::path(out_dir) / "summary.json";
  std::ofstream csv(csv_path);
  std::ofstream summary(summary_path);
  if (!csv || !summary) {
    std::fprintf(stderr, "cannot write to %s\n", out_dir.c_str());
    return 1;
  }
  csv << result.csv;
  summary << result.summary_json;
  return csv && summary ? 0 : 1;
}

int run_benchmark_to_files(const BenchmarkSpec& spec, const std::string& out_dir) {
  BenchmarkResult result;
  try {
    result = run_benchmark(spec);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "benchmark failed: %s\n", e.what());
    return 2;
  }
  return write_benchmark_files(result, out_dir);
}

}  // namespace sober
