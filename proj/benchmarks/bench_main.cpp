#include <benchmark/benchmark.h>

#include <vector>

#include "slowfast/ergodic.hpp"
#include "slowfast/integrate.hpp"
#include "slowfast/model.hpp"
#include "slowfast/random.hpp"
#include "slowfast/statistics.hpp"
#include "slowfast/weak_error.hpp"

using namespace slowfast;

namespace {

void BM_Philox(benchmark::State& state) {
  Philox4x32::Counter ctr{0, 0, 0, 0};
  const Philox4x32::Key key{0x12345678u, 0x9abcdef0u};
  for (auto _ : state) {
    ctr[0]++;
    benchmark::DoNotOptimize(Philox4x32::apply(ctr, key));
  }
  state.SetItemsProcessed(state.iterations() * 4);
}
BENCHMARK(BM_Philox);

void BM_InverseNormalCdf(benchmark::State& state) {
  double p = 0.0;
  for (auto _ : state) {
    p += 0.6180339887498949;
    if (p >= 1.0) p -= 1.0;
    benchmark::DoNotOptimize(inverse_normal_cdf(p == 0.0 ? 0.5 : p));
  }
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_InverseNormalCdf);

// Bulk increment normals: the hot path of every integrator.
void BM_IncrementNormals(benchmark::State& state) {
  const Substream sub(RandomPlan{1}, NoiseRole::kFastBrownian);
  std::vector<double> out(static_cast<std::size_t>(state.range(0)));
  std::uint64_t first = 0;
  for (auto _ : state) {
    sub.increment_normals(first, out.size(), 1, out);
    first += out.size();
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_IncrementNormals)->Arg(256)->Arg(4096);

void BM_JumpTimes(benchmark::State& state) {
  std::uint64_t i = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        sample_jump_times(64.0, 1.0, RandomPlan{2}.for_sample(i++), NoiseRole::kFastJumps));
  }
}
BENCHMARK(BM_JumpTimes);

// One coupled path of the benchmark; items are base steps.
void BM_CoupledPath(benchmark::State& state) {
  const auto m = make_jump_ou_benchmark({});
  const double eps = 1.0 / static_cast<double>(state.range(0));
  const ScaleParams scale{eps, 1.0, 0.1 * eps, 0.1};
  const std::vector<double> x{0.0}, y{0.5};
  std::uint64_t i = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(simulate_coupled(m, scale, x, y, RandomPlan{3}.for_sample(i++)));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(base_step_count(1.0, scale.dt)));
}
BENCHMARK(BM_CoupledPath)->Arg(8)->Arg(64)->Arg(256);

void BM_CoupledPair(benchmark::State& state) {
  const auto m = make_jump_ou_benchmark({});
  const auto abar = AveragedDrift::analytic(m).field();
  const double eps = 1.0 / 64.0;
  const ScaleParams scale{eps, 1.0, 0.1 * eps, 0.1};
  const std::vector<double> x{0.0}, y{0.5};
  std::uint64_t i = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        simulate_coupled_pair(m, abar, scale, x, y, RandomPlan{4}.for_sample(i++)));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(base_step_count(1.0, scale.dt)));
}
BENCHMARK(BM_CoupledPair);

void BM_FrozenPath(benchmark::State& state) {
  const auto m = make_jump_ou_benchmark({});
  const std::vector<double> x{0.0}, y{0.5};
  std::uint64_t i = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(frozen_state_at(m, x, y, 10.0, 0.01, RandomPlan{5}.for_sample(i++)));
  }
  state.SetItemsProcessed(state.iterations() * 1000);
}
BENCHMARK(BM_FrozenPath);

void BM_WeakErrorBlock(benchmark::State& state) {
  const auto m = make_jump_ou_benchmark({});
  const auto abar = AveragedDrift::analytic(m).field();
  const ScaleParams scale{0.125, 1.0, 0.0125, 0.1};
  const std::vector<double> x{0.0}, y{0.5};
  set_thread_count(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        weak_error(m, abar, scale, x, y, Observable::tanh_sum(), 1024, RandomPlan{6}));
  }
  set_thread_count(0);
  state.SetItemsProcessed(state.iterations() * 1024);
}
BENCHMARK(BM_WeakErrorBlock)->Arg(1)->Arg(2)->UseRealTime();

}  // namespace
BENCHMARK_MAIN();
