#pragma once

#include <optional>
#include <string>
#include <vector>

#include "sober/solver.hpp"

namespace sober {

enum class ProblemKind { Ackley, Rosenbrock, Hartmann6, Shekel4, GaussianBq, FingerprintFile };

ProblemKind parse_problem(const std::string& name);
std::string problem_name(ProblemKind kind);

struct ProblemOptions {
  int ackley_continuous = 3;
  int ackley_binary = 20;
  bool shekel_as_printed = false;  // reproduce the non-reciprocal printed form
  int gaussian_bq_dim = 3;
  std::string fingerprint_path;
  std::string fingerprint_format = "jsonl";  // or "csv"
};

/// A benchmark task: domain, prior, maximization oracle and ground truth.
struct Problem {
  std::string name;
  ProblemKind kind = ProblemKind::Ackley;
  DomainSpec domain;
  PriorModel prior;
  Oracle oracle;
  SoberMode mode = SoberMode::Optimize;
  std::optional<MixedPoint> optimum;  // x*_true when known
  double optimum_value = std::numeric_limits<double>::quiet_NaN();
  double evidence_truth = std::numeric_limits<double>::quiet_NaN();  // GaussianBq closed form
};

Problem make_problem(ProblemKind kind, const ProblemOptions& options = {});

/// Maximization objective at a domain point (negated where the source
/// problems are minimization tasks). Throws on out-of-domain input.
double eval_objective(const Problem& problem, const MixedPoint& x);

enum class BaselineKind { Random, PlainTs };

BaselineKind parse_baseline(const std::string& name);
std::string baseline_name(BaselineKind kind);

/// One batch from a baseline sampler: `Random` draws n prior samples (n
/// distinct candidates on enumerable domains); `PlainTs` takes n independent
/// approximate-posterior-sample argmaxes over the pool.
std::vector<MixedPoint> baseline_step(BaselineKind kind, const GpModel& gp,
                                      const EmpiricalMeasure& pool, int n, std::uint64_t seed);

struct MetricsRow {
  std::string method;
  int repeat = 0;
  int iteration = 0;
  double best_y = std::numeric_limits<double>::quiet_NaN();
  double simple_regret = std::numeric_limits<double>::quiet_NaN();
  double bayes_regret = std::numeric_limits<double>::quiet_NaN();  // BR
  double measure_variance = std::numeric_limits<double>::quiet_NaN();  // MV
  double mean_distance = std::numeric_limits<double>::quiet_NaN();     // MD
  double wce = std::numeric_limits<double>::quiet_NaN();
  double evidence_mean = std::numeric_limits<double>::quiet_NaN();
  double evidence_var = std::numeric_limits<double>::quiet_NaN();
  double evidence_error = std::numeric_limits<double>::quiet_NaN();
  double elapsed_s = std::numeric_limits<double>::quiet_NaN();  // cumulative seconds
};

/// Per-iteration metrics from a run trace. BR uses the queried batch values
/// (the oracles are noiseless); MD measures Euclidean distance between the
/// measure mean and the true optimum on the continuous embedding. Rows for
/// methods without a measure leave MV/MD/wce empty.
std::vector<MetricsRow> compute_metrics(const std::vector<IterationRecord>& records,
                                        const Problem& problem, const std::string& method,
                                        int repeat);

struct BenchmarkSpec {
  ProblemKind problem = ProblemKind::Ackley;
  ProblemOptions options;
  int repeats = 10;
  int iterations = 10;
  SoberConfig config;
  bool run_sober = true;
  std::vector<BaselineKind> baselines;
  // wall-clock timings are opt-in so a fixed seed reproduces byte-identical
  // output files
  bool include_timings = false;

  void validate() const;
};

/// Parses the JSON benchmark configuration (see README for the schema).
BenchmarkSpec parse_benchmark_spec(const std::string& json_text);

struct BenchmarkResult {
  std::vector<MetricsRow> rows;  // sorted by (method, repeat, iteration)
  std::string csv;               // results.csv content
  std::string summary_json;      // summary.json content
};

/// Runs SOBER and the requested baselines over all repeats (in parallel
/// threads with per-repeat seeds) and merges rows deterministically.
BenchmarkResult run_benchmark(const BenchmarkSpec& spec);

/// Writes results.csv / summary.json under out_dir; 0 on success.
int write_benchmark_files(const BenchmarkResult& result, const std::string& out_dir);

/// run_benchmark + write results.csv / summary.json under out_dir.
/// Returns 0 on success, nonzero on I/O failure.
int run_benchmark_to_files(const BenchmarkSpec& spec, const std::string& out_dir);

/// The stable CSV header.
std::string metrics_csv_header();
std::string metrics_csv_row(const MetricsRow& row);

}  // namespace sober
