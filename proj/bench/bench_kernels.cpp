#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "dancerl/core/kernels.hpp"
#include "dancerl/theory/tabular.hpp"

namespace {

using namespace dancerl;

std::vector<double> random_buffer(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> d(0.0, 1.0);
  std::vector<double> v(n);
  for (double& x : v) x = d(rng);
  return v;
}

// Square problems of side n: C = A B.
template <void (*Kernel)(const double*, const double*, double*, std::size_t, std::size_t, std::size_t, bool)>
void BM_matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = random_buffer(n * n, 1), b = random_buffer(n * n, 2);
  std::vector<double> c(n * n);
  for (auto _ : state) {
    Kernel(a.data(), b.data(), c.data(), n, n, n, false);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * n * n * n));
}

template <void (*Kernel)(const double*, const double*, double*, std::size_t, std::size_t, std::size_t)>
void BM_matmul_at(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = random_buffer(n * n, 3), b = random_buffer(n * n, 4);
  std::vector<double> c(n * n);
  for (auto _ : state) {
    Kernel(a.data(), b.data(), c.data(), n, n, n);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * n * n * n));
}

void BM_sweep(benchmark::State& state) {
  tabular::SweepConfig cfg;
  cfg.instances = static_cast<int>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(tabular::run_sweep(cfg));
  state.counters["threads"] = kernels::max_threads();
}

}  // namespace

BENCHMARK(BM_matmul<kernels::serial::matmul>)->Name("matmul/serial")->RangeMultiplier(2)->Range(32, 256);
BENCHMARK(BM_matmul<kernels::matmul>)->Name("matmul/openmp")->RangeMultiplier(2)->Range(32, 256);
BENCHMARK(BM_matmul<kernels::serial::matmul_bt>)->Name("matmul_bt/serial")->RangeMultiplier(2)->Range(32, 256);
BENCHMARK(BM_matmul<kernels::matmul_bt>)->Name("matmul_bt/openmp")->RangeMultiplier(2)->Range(32, 256);
BENCHMARK(BM_matmul_at<kernels::serial::matmul_at_acc>)->Name("matmul_at_acc/serial")->RangeMultiplier(2)->Range(32, 256);
BENCHMARK(BM_matmul_at<kernels::matmul_at_acc>)->Name("matmul_at_acc/openmp")->RangeMultiplier(2)->Range(32, 256);
BENCHMARK(BM_sweep)->Arg(200)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
