// Serial reference against OpenMP kernels on simulated design data.
//
//   bench_kernels --benchmark_filter=loglik

#include <benchmark/benchmark.h>

#include <map>

#include <omp.h>

#include "mvgamlss/likelihood.hpp"
#include "mvgamlss/simstudy.hpp"

namespace {

using namespace mvgamlss;

struct Fixture {
    Model model;
    ParameterState state;
};

// dagum5d data of size n with a rough MAP-free state.
Fixture make_fixture(std::size_t n) {
    SimDesign design;
    design.n = n;
    design.seed = 11;
    const SimDataset sim = generate(design, 0);
    Model model = Model::build(design_model(DesignTag::dagum5d), sim.data);
    ParameterState state = initial_state(model);
    Rng rng = make_rng(3);
    for (std::size_t b = 0; b < model.blocks().size(); ++b)
        for (auto& v : state.beta[b]) v = 0.1 * standard_normal(rng);
    return {std::move(model), std::move(state)};
}

const Fixture& fixture(std::size_t n) {
    static std::map<std::size_t, Fixture> cache;
    auto it = cache.find(n);
    if (it == cache.end()) it = cache.emplace(n, make_fixture(n)).first;
    return it->second;
}

Execution mode(std::int64_t flag) { return flag ? Execution::parallel : Execution::serial; }

void BM_loglik(benchmark::State& st) {
    const Fixture& f = fixture(static_cast<std::size_t>(st.range(0)));
    LikelihoodWorkspace ws(f.model, mode(st.range(1)));
    Rng rng = make_rng(1);
    ws.set_state(f.state);
    for (auto _ : st) benchmark::DoNotOptimize(ws.log_likelihood(rng));
    st.SetItemsProcessed(st.iterations() * st.range(0));
    st.SetLabel(st.range(1) ? "parallel" : "serial");
}

void BM_derivatives(benchmark::State& st) {
    const Fixture& f = fixture(static_cast<std::size_t>(st.range(0)));
    LikelihoodWorkspace ws(f.model, mode(st.range(1)));
    Rng rng = make_rng(1);
    ws.set_state(f.state);
    const std::size_t k = f.model.copula_predictor(0);
    for (auto _ : st) benchmark::DoNotOptimize(ws.derivatives(k, rng).score.data());
    st.SetItemsProcessed(st.iterations() * st.range(0));
    st.SetLabel(st.range(1) ? "parallel" : "serial");
}

void BM_set_state(benchmark::State& st) {
    const Fixture& f = fixture(static_cast<std::size_t>(st.range(0)));
    LikelihoodWorkspace ws(f.model, mode(st.range(1)));
    for (auto _ : st) benchmark::DoNotOptimize(ws.set_state(f.state));
    st.SetItemsProcessed(st.iterations() * st.range(0));
    st.SetLabel(st.range(1) ? "parallel" : "serial");
}

void sizes(benchmark::internal::Benchmark* b) {
    for (std::int64_t n : {500, 5000, 50000})
        for (std::int64_t par : {0, 1}) b->Args({n, par});
    b->Unit(benchmark::kMicrosecond);
}

}  // namespace

BENCHMARK(BM_loglik)->Apply(sizes);
BENCHMARK(BM_derivatives)->Apply(sizes);
BENCHMARK(BM_set_state)->Apply(sizes);

int main(int argc, char** argv) {
    benchmark::Initialize(&argc, argv);
    benchmark::AddCustomContext("omp_max_threads", std::to_string(omp_get_max_threads()));
    benchmark::RunSpecifiedBenchmarks();
    benchmark::Shutdown();
    return 0;
}
