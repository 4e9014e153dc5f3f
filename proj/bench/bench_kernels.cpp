// Serial vs OpenMP Monte Carlo, and the cost of FedAvg rounds.
#include <benchmark/benchmark.h>

#include "fedate/fedavg.hpp"
#include "fedate/harness.hpp"
#include "fedate/scenarios.hpp"

using namespace fedate;

namespace {

ExperimentPlan small_plan(bool parallel) {
  ExperimentPlan plan;
  plan.scenario = preset("homog-small");
  plan.estimators = {parse_estimator("pool"), parse_estimator("meta-ivw"), parse_estimator("1s-ivw")};
  plan.replications = 64;
  plan.base_seed = 3;
  plan.parallel = parallel;
  return plan;
}

void BM_MonteCarloSerial(benchmark::State& state) {
  const auto plan = small_plan(false);
  for (auto _ : state) benchmark::DoNotOptimize(run_monte_carlo(plan).rows);
}

void BM_MonteCarloParallel(benchmark::State& state) {
  const auto plan = small_plan(true);
  for (auto _ : state) benchmark::DoNotOptimize(run_monte_carlo(plan).rows);
}

void BM_FedAvgRounds(benchmark::State& state) {
  RngStream rng(5, 0);
  const auto fed = generate(preset("homog-large"), rng);
  const auto views = arm_views(fed, 1);
  FedAvgConfig cfg;
  cfg.T = static_cast<std::size_t>(state.range(0));
  cfg.eta = 1e-2;
  cfg.convergence_tol = 0.0;
  cfg.keep_log = false;
  for (auto _ : state) benchmark::DoNotOptimize(run_fedavg(views, cfg, 1).theta);
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

}  // namespace

BENCHMARK(BM_MonteCarloSerial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_MonteCarloParallel)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_FedAvgRounds)->Arg(100)->Arg(1000)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
