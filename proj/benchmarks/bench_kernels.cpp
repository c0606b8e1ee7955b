#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "distmatch/matching.hpp"
#include "distmatch/metric.hpp"
#include "distmatch/overlap.hpp"
#include "distmatch/quantile.hpp"
#include "distmatch/simulation.hpp"
#include "distmatch/wasserstein.hpp"

namespace {

using namespace distmatch;

QuantileFunction random_qf(const GridPtr& grid, std::mt19937_64& rng) {
  std::normal_distribution<double> n01(0.0, 1.0);
  return truncated_normal_quantile(n01(rng), 1.0 + std::abs(n01(rng)), grid);
}

SimulatedData simulated(Dgp dgp, std::size_t n) {
  SimulationSpec spec;
  spec.dgp = dgp;
  spec.n = n;
  spec.seed = 11;
  spec.grid = ProbabilityGrid::uniform(19);
  return generate(spec);
}

void BM_SquaredW2(benchmark::State& state) {
  auto grid = ProbabilityGrid::uniform(static_cast<std::size_t>(state.range(0)));
  std::mt19937_64 rng(1);
  const auto a = random_qf(grid, rng);
  const auto b = random_qf(grid, rng);
  for (auto _ : state) benchmark::DoNotOptimize(squared_w2(a, b));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_SquaredW2)->Arg(9)->Arg(99)->Arg(999);

void BM_Barycenter(benchmark::State& state) {
  auto grid = ProbabilityGrid::uniform(99);
  std::mt19937_64 rng(2);
  std::vector<QuantileFunction> members;
  for (int i = 0; i < state.range(0); ++i) members.push_back(random_qf(grid, rng));
  for (auto _ : state) benchmark::DoNotOptimize(barycenter(members));
}
BENCHMARK(BM_Barycenter)->Arg(2)->Arg(10)->Arg(50);

// One evaluation of the metric-learning loss, the optimizer's inner step.
void BM_TrainingLoss(benchmark::State& state, Dgp dgp) {
  const auto sim = simulated(dgp, static_cast<std::size_t>(state.range(0)));
  const TrainingObjective objective(sim.data, 10);
  std::vector<double> w(objective.dimension(), 1.0);
  for (auto _ : state) benchmark::DoNotOptimize(objective.loss(w, 0.001));
}
BENCHMARK_CAPTURE(BM_TrainingLoss, complex, Dgp::Complex)->Arg(300)->Arg(1000)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(BM_TrainingLoss, dist_cov, Dgp::DistCov)->Arg(300)->Unit(benchmark::kMillisecond);

void BM_MatchIndexBuild(benchmark::State& state) {
  const auto sim = simulated(Dgp::Complex, static_cast<std::size_t>(state.range(0)));
  const auto m = MetricParams::uniform(sim.data.dimension());
  for (auto _ : state) {
    MatchIndex index(sim.data, m);
    benchmark::DoNotOptimize(index.size());
  }
}
BENCHMARK(BM_MatchIndexBuild)->Arg(500)->Unit(benchmark::kMillisecond);

void BM_EstimateAte(benchmark::State& state) {
  const auto sim = simulated(Dgp::Complex, static_cast<std::size_t>(state.range(0)));
  const MatchIndex index(sim.data, MetricParams::uniform(sim.data.dimension()));
  for (auto _ : state) benchmark::DoNotOptimize(estimate_ate(index, 10));
}
BENCHMARK(BM_EstimateAte)->Arg(500)->Unit(benchmark::kMillisecond);

void BM_DiagnoseOverlap(benchmark::State& state) {
  const auto sim = simulated(Dgp::PositivityCorner, static_cast<std::size_t>(state.range(0)));
  const MatchIndex index(sim.data, MetricParams::uniform(2));
  for (auto _ : state) benchmark::DoNotOptimize(diagnose_overlap(index, 10));
}
BENCHMARK(BM_DiagnoseOverlap)->Arg(1000)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
