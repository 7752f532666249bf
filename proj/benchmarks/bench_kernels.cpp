#include <benchmark/benchmark.h>

#include "sober/kernels.hpp"
#include "sober/random.hpp"

namespace {

using namespace sober;

Matrix random_points(int n, int d, std::uint64_t seed) {
  Rng rng(seed);
  Matrix x(n, d);
  for (int i = 0; i < n; ++i) {
    for (int k = 0; k < d; ++k) x(i, k) = rng.uniform();
  }
  return x;
}

void BM_gram_rbf(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const Matrix x = random_points(n, 8, 3);
  const KernelParams params = KernelParams::rbf_iso(1.0, 0.4, 8);
  for (auto _ : state) {
    Matrix g = gram(params, x, x);
    benchmark::DoNotOptimize(g.data());
  }
}

BENCHMARK(BM_gram_rbf)->Arg(256)->Arg(1024)->Arg(4096)->Unit(benchmark::kMillisecond);

void BM_fit_nystrom(benchmark::State& state) {
  const int m = static_cast<int>(state.range(0));
  const Matrix anchors = random_points(m, 8, 5);
  const KernelParams params = KernelParams::rbf_iso(1.0, 0.4, 8);
  for (auto _ : state) {
    NystromFeatures f = fit_nystrom(params, anchors, 63, 10, 11);
    benchmark::DoNotOptimize(f.eigenvalues.data());
  }
}

BENCHMARK(BM_fit_nystrom)->Arg(128)->Arg(256)->Arg(512)->Unit(benchmark::kMillisecond);

}  // namespace
