// Serial reference kernels against the OpenMP kernels on clone datasets with
// delayed entry, plus block-parallel data generation at 1 and all workers.

#include <vector>

#include <benchmark/benchmark.h>

#include "survbias/datagen/simulation.hpp"
#include "survbias/kernels/cox_kernels.hpp"
#include "survbias/survcore/cox.hpp"

using namespace survbias;

namespace {

CountingProcessData clone_data(std::size_t n) {
    SimulationConfig c;
    c.n_per_cohort = n;
    c.conditional_hr = 1.8;
    c.seed = 3;
    return build_counterfactual(c, Estimand::ATE);
}

Execution mode(const benchmark::State& state) { return state.range(1) ? Execution::Parallel : Execution::Serial; }

void BM_Evaluate(benchmark::State& state) {
    const auto data = clone_data(static_cast<std::size_t>(state.range(0)));
    const auto layout = kernels::RiskSetLayout::build(data);
    const std::vector<double> eta(data.size(), 0.0);
    for (auto _ : state) {
        auto pl = kernels::evaluate(layout, data.covariate_values(), eta, Ties::Efron, mode(state));
        benchmark::DoNotOptimize(pl.loglik);
    }
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(data.size()));
}

void BM_ScoreResiduals(benchmark::State& state) {
    const auto data = clone_data(static_cast<std::size_t>(state.range(0)));
    const auto layout = kernels::RiskSetLayout::build(data);
    const std::vector<double> eta(data.size(), 0.3);
    for (auto _ : state) {
        auto r = kernels::score_residuals(layout, data, data.covariate_values(), eta, Ties::Efron, mode(state));
        benchmark::DoNotOptimize(r.data());
    }
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(data.size()));
}

void BM_CoxFit(benchmark::State& state) {
    const auto data = clone_data(static_cast<std::size_t>(state.range(0)));
    CoxOptions o;
    o.cluster_variance = true;
    o.execution = mode(state);
    for (auto _ : state) {
        auto fit = cox_fit(data, o);
        benchmark::DoNotOptimize(fit.coefficients.data());
    }
}

// range(1): 0 = one worker, 1 = runtime default.
void BM_Simulate(benchmark::State& state) {
    SimulationConfig c;
    c.n_per_cohort = static_cast<std::size_t>(state.range(0));
    c.conditional_hr = 1.8;
    kernels::set_worker_count(state.range(1) ? 0 : 1);
    for (auto _ : state) {
        auto s = simulate_cohorts(c);
        benchmark::DoNotOptimize(s.treated.records.data());
    }
    kernels::set_worker_count(0);
    state.SetItemsProcessed(state.iterations() * state.range(0));
}

}  // namespace

BENCHMARK(BM_Evaluate)->ArgsProduct({{25'000, 200'000}, {0, 1}})->ArgNames({"n", "parallel"})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ScoreResiduals)->ArgsProduct({{25'000, 200'000}, {0, 1}})->ArgNames({"n", "parallel"})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_CoxFit)->ArgsProduct({{25'000, 100'000}, {0, 1}})->ArgNames({"n", "parallel"})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Simulate)->ArgsProduct({{50'000, 200'000}, {0, 1}})->ArgNames({"n", "parallel"})->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
