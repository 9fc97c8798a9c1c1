#include <benchmark/benchmark.h>

#include <vector>

#include "fedlpa/aggregate.hpp"
#include "fedlpa/laplace.hpp"
#include "fedlpa/linalg.hpp"
#include "fedlpa/nn.hpp"
#include "test_support.hpp"

namespace fedlpa {
namespace {

using testing::random_matrix;
using testing::random_payloads;
using testing::random_spd;

// B M A for one 784-256-64-10 layer shape: out x (in+1).
void BM_Sandwich(benchmark::State& state) {
  const auto out = static_cast<std::size_t>(state.range(0));
  const auto in = static_cast<std::size_t>(state.range(1));
  Rng rng(1);
  const Matrix a = random_spd(rng, in + 1).matrix();
  const Matrix b = random_spd(rng, out).matrix();
  const Matrix m = random_matrix(rng, out, in + 1);
  for (auto _ : state) benchmark::DoNotOptimize(sandwich(b, m, a));
}
BENCHMARK(BM_Sandwich)->Args({10, 64})->Args({64, 256})->Args({256, 784})->Unit(benchmark::kMicrosecond);

// One apply of sum_k B_k M A_k with K = 10.
void BM_QuadraticApply(benchmark::State& state) {
  const auto out = static_cast<std::size_t>(state.range(0));
  const auto in = static_cast<std::size_t>(state.range(1));
  Rng rng(2);
  const auto payloads = random_payloads(rng, 10, in, out);
  const LayerQuadratic q(payloads, 0, build_state(payloads).layers[0].z_sum);
  const Matrix m = random_matrix(rng, out, in + 1);
  for (auto _ : state) benchmark::DoNotOptimize(q.apply(m));
}
BENCHMARK(BM_QuadraticApply)->Args({10, 64})->Args({64, 256})->Unit(benchmark::kMicrosecond);

// Full layer solve, conjugate residual vs gradient descent, K = 10.
void BM_SolveLayer(benchmark::State& state) {
  Rng rng(3);
  const auto payloads = random_payloads(rng, 10, 64, 10);
  const AggregationState s = build_state(payloads);
  SolverConfig cfg;
  cfg.method = state.range(0) == 0 ? SolverMethod::kConjugateResidual : SolverMethod::kGradientDescent;
  std::size_t steps = 0;
  for (auto _ : state) {
    const SolveResult r = fedlpa_solve(s, payloads, cfg);
    steps = r.trace.layers[0].iterations.size();
    benchmark::DoNotOptimize(r.params);
  }
  state.counters["iterations"] = static_cast<double>(steps);
  state.SetLabel(state.range(0) == 0 ? "cr" : "gd");
}
BENCHMARK(BM_SolveLayer)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

// Explicit Kronecker solve for comparison, 9 x 6 layer.
void BM_OracleSolve(benchmark::State& state) {
  Rng rng(4);
  const auto payloads = random_payloads(rng, 5, 8, 6);
  for (auto _ : state) benchmark::DoNotOptimize(oracle_solve(payloads));
}
BENCHMARK(BM_OracleSolve)->Unit(benchmark::kMicrosecond);

// One minibatch of backprop on the 784-256-64-10 MLP.
void BM_Backward(benchmark::State& state) {
  const auto batch = static_cast<std::size_t>(state.range(0));
  Rng rng(5);
  const ModelParams p = init_params(MlpArchitecture({784, 256, 64, 10}), 5);
  const Matrix x = random_matrix(rng, batch, 784, 0.0, 1.0);
  std::vector<int> y(batch);
  for (int& v : y) v = static_cast<int>(rng.below(10));
  for (auto _ : state) benchmark::DoNotOptimize(backward(p, x, y));
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * batch));
}
BENCHMARK(BM_Backward)->Arg(64)->Arg(256)->Unit(benchmark::kMicrosecond);

// K-FAC factors of one client holding 1000 samples.
void BM_EstimateFactors(benchmark::State& state) {
  Rng rng(6);
  const ModelParams p = init_params(MlpArchitecture({784, 256, 64, 10}), 6);
  std::vector<int> y(1000);
  for (int& v : y) v = static_cast<int>(rng.below(10));
  const LabeledDataset d(random_matrix(rng, 1000, 784, 0.0, 1.0), y, 10);
  for (auto _ : state) benchmark::DoNotOptimize(estimate_factors(p, d));
}
BENCHMARK(BM_EstimateFactors)->Unit(benchmark::kMillisecond);

}  // namespace
}  // namespace fedlpa

BENCHMARK_MAIN();
