#include <benchmark/benchmark.h>

#include "sober/random.hpp"
#include "sober/recombination.hpp"

namespace {

using namespace sober;

struct Instance {
  EmpiricalMeasure measure;
  Matrix phi;
};

Instance make_instance(int n_points, int n_batch, std::uint64_t seed) {
  DomainSpec domain;
  for (int i = 0; i < 3; ++i) domain.continuous.push_back({0.0, 1.0});
  Rng rng(seed);
  std::vector<MixedPoint> points;
  for (int i = 0; i < n_points; ++i) {
    MixedPoint p;
    p.continuous = Vector(3);
    for (int k = 0; k < 3; ++k) p.continuous[k] = rng.uniform();
    points.push_back(std::move(p));
  }
  const Vector w = Vector::Constant(n_points, 1.0 / n_points);
  Instance inst{make_measure(domain, std::move(points), w), Matrix()};

  const KernelParams params = KernelParams::rbf_iso(1.0, 0.3, 3);
  Matrix anchors = inst.measure.embedded.topRows(std::min(n_points, 4 * n_batch));
  const NystromFeatures features = fit_nystrom(params, anchors, n_batch - 1, 10, seed);
  inst.phi = eval_test_functions(features, inst.measure.embedded);
  return inst;
}

void BM_recombine(benchmark::State& state) {
  const int n_points = static_cast<int>(state.range(0));
  const int n_batch = static_cast<int>(state.range(1));
  const Instance inst = make_instance(n_points, n_batch, 17);
  std::uint64_t seed = 0;
  for (auto _ : state) {
    auto result = recombine(inst.measure.weights, inst.phi, seed++);
    benchmark::DoNotOptimize(result);
  }
  state.SetComplexityN(n_points);
}

BENCHMARK(BM_recombine)
    ->Args({1000, 32})
    ->Args({4000, 32})
    ->Args({16000, 32})
    ->Args({16000, 64})
    ->Unit(benchmark::kMillisecond)
    ->Complexity(benchmark::oNLogN);

void BM_greedy_thinning(benchmark::State& state) {
  const int n_points = static_cast<int>(state.range(0));
  const Instance inst = make_instance(n_points, 32, 19);
  const CovarianceOp kernel = kernel_op(KernelParams::rbf_iso(1.0, 0.3, 3));
  for (auto _ : state) {
    auto batch = greedy_thinning(inst.measure, kernel, Vector(), 32);
    benchmark::DoNotOptimize(batch);
  }
}

BENCHMARK(BM_greedy_thinning)->Arg(500)->Arg(1000)->Unit(benchmark::kMillisecond);

}  // namespace
