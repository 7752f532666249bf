#include <benchmark/benchmark.h>

#include "sober/gp.hpp"
#include "sober/random.hpp"

namespace {

using namespace sober;

Dataset synthetic_data(int n, int d, std::uint64_t seed) {
  Rng rng(seed);
  Dataset data;
  data.X.resize(n, d);
  data.y.resize(n);
  for (int i = 0; i < n; ++i) {
    for (int k = 0; k < d; ++k) data.X(i, k) = rng.uniform();
    data.y[i] = std::sin(3.0 * data.X.row(i).sum()) + 0.01 * rng.normal();
  }
  return data;
}

void BM_gp_fit_predict(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const Dataset data = synthetic_data(n, 6, 23);
  const KernelParams params = KernelParams::rbf_iso(1.0, 0.5, 6);
  const Matrix query = synthetic_data(512, 6, 29).X;
  for (auto _ : state) {
    GpModel model(data, params, 1e-4);
    Vector mean, var;
    model.predict_mean_var(query, &mean, &var);
    benchmark::DoNotOptimize(mean.data());
  }
}

BENCHMARK(BM_gp_fit_predict)->Arg(128)->Arg(256)->Arg(512)->Unit(benchmark::kMillisecond);

void BM_log_marginal_gradient(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const Dataset data = synthetic_data(n, 6, 31);
  const GpModel model(data, KernelParams::rbf_iso(1.0, 0.5, 6), 1e-4);
  for (auto _ : state) {
    Vector g = model.log_marginal_likelihood_gradient();
    benchmark::DoNotOptimize(g.data());
  }
}

BENCHMARK(BM_log_marginal_gradient)->Arg(128)->Arg(256)->Arg(512)->Unit(benchmark::kMillisecond);

}  // namespace
