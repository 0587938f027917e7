#include <benchmark/benchmark.h>

#include <omp.h>

#include "optnet/batch.hpp"
#include "optnet/lu.hpp"
#include "optnet/pdipm.hpp"
#include "optnet/qp.hpp"

using namespace optnet;

namespace {

std::vector<QPInstance> make_batch(std::size_t batch, std::size_t n) {
  std::vector<QPInstance> qps;
  for (std::size_t i = 0; i < batch; ++i) qps.push_back(random_feasible_qp(n, n / 4, n, i).qp);
  return qps;
}

BatchMatrix make_stack(std::size_t batch, std::size_t n) {
  std::vector<Matrix> slices;
  for (std::size_t b = 0; b < batch; ++b) {
    Matrix m = random_feasible_qp(n, 0, 1, b).qp.Q;
    slices.push_back(std::move(m));
  }
  return BatchMatrix::stack(slices);
}

Matrix lu_inverse_apply(const Matrix& m) {
  return lu_solve(lu_factor(m), Matrix::identity(m.rows()));
}

void BM_SolveBatchSerial(benchmark::State& state) {
  const auto qps = make_batch(static_cast<std::size_t>(state.range(0)), static_cast<std::size_t>(state.range(1)));
  for (auto _ : state) benchmark::DoNotOptimize(solve_batch_serial(qps, {}));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_SolveBatchParallel(benchmark::State& state) {
  const auto qps = make_batch(static_cast<std::size_t>(state.range(0)), static_cast<std::size_t>(state.range(1)));
  const int threads = omp_get_max_threads();
  for (auto _ : state) benchmark::DoNotOptimize(solve_batch(qps, {}, threads));
  state.SetItemsProcessed(state.iterations() * state.range(0));
  state.counters["threads"] = threads;
}

void BM_BatchMapSerial(benchmark::State& state) {
  const BatchMatrix xs = make_stack(static_cast<std::size_t>(state.range(0)), static_cast<std::size_t>(state.range(1)));
  for (auto _ : state) benchmark::DoNotOptimize(batch_map_serial(lu_inverse_apply, xs));
}

void BM_BatchMapParallel(benchmark::State& state) {
  const BatchMatrix xs = make_stack(static_cast<std::size_t>(state.range(0)), static_cast<std::size_t>(state.range(1)));
  const int threads = omp_get_max_threads();
  for (auto _ : state) benchmark::DoNotOptimize(batch_map(lu_inverse_apply, xs, threads));
  state.counters["threads"] = threads;
}

}  // namespace

BENCHMARK(BM_SolveBatchSerial)->Args({16, 20})->Args({64, 20})->Args({16, 50})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_SolveBatchParallel)->Args({16, 20})->Args({64, 20})->Args({16, 50})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_BatchMapSerial)->Args({64, 32})->Args({256, 32})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_BatchMapParallel)->Args({64, 32})->Args({256, 32})->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
