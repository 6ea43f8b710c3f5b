// Serial reference kernels against their OpenMP counterparts.
#include <benchmark/benchmark.h>

#include <cmath>

#include "cadv/kl_lab.hpp"
#include "cadv/sampler.hpp"

using namespace cadv;

namespace {

const KdeDist& concept_kde() {
    static const KdeDist k = [] {
        RngStream rng(1, 0);
        KdeDist d{{}, 0.03};
        for (int i = 0; i < 30; ++i) d.centers.push_back({0.3 + 0.05 * rng.normal(), 0.4 + 0.05 * rng.normal()});
        return d;
    }();
    return k;
}

const VictimDistribution& victim() {
    static const VictimDistribution v = [] {
        RngStream rng(2, 0);
        return VictimDistribution(std::make_shared<const Classifier>(init_classifier({2, 16, 6}, rng)), 3, 1.0);
    }();
    return v;
}

LangevinConfig chain_config() {
    LangevinConfig c;
    c.step_size = 1e-4;
    c.steps = 2000;
    c.burn_in = 0;
    c.thinning = 1;
    c.seed = 3;
    return c;
}

template <auto Kernel>
void BM_chains(benchmark::State& state) {
    const GibbsTarget target(concept_kde(), victim());
    const auto count = static_cast<std::size_t>(state.range(0));
    for (auto _ : state) benchmark::DoNotOptimize(Kernel(target, chain_config(), count, std::nullopt));
    state.SetItemsProcessed(state.iterations() * state.range(0));
}

template <auto Kernel>
void BM_delta_terms(benchmark::State& state) {
    const DistanceDistribution d1 = concept_kde();
    const DistanceDistribution d2 = KdeDist{{concept_kde().centers.front()}, concept_kde().bandwidth};
    const DeltaProblem problem{d1, d2, victim()};
    const auto n = static_cast<std::size_t>(state.range(0));
    for (auto _ : state) benchmark::DoNotOptimize(Kernel(problem, n, RngStream(4, 0), true));
    state.SetItemsProcessed(state.iterations() * state.range(0));
}

template <auto Kernel>
void BM_grid(benchmark::State& state) {
    const DistanceDistribution p = concept_kde();
    const auto r = static_cast<std::size_t>(state.range(0));
    const GridOracle g{{-0.2, -0.1}, {0.8, 0.9}, {r, r}};
    auto fn = [&](std::span<const double> x) { return std::exp(log_density(p, x)); };
    for (auto _ : state) benchmark::DoNotOptimize(Kernel(fn, g));
    state.SetItemsProcessed(state.iterations() * state.range(0) * state.range(0));
}

}  // namespace

BENCHMARK(BM_chains<run_chains_serial>)->Name("chains/serial")->Arg(16)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_chains<run_chains_parallel>)->Name("chains/parallel")->Arg(16)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_delta_terms<delta_terms_serial>)->Name("delta_terms/serial")->Arg(10'000)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_delta_terms<delta_terms_parallel>)->Name("delta_terms/parallel")->Arg(10'000)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_grid<grid_integrate_serial>)->Name("grid/serial")->Arg(512)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_grid<grid_integrate_parallel>)->Name("grid/parallel")->Arg(512)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
