#include <benchmark/benchmark.h>

#include <random>

#include "kvevict/caote.hpp"
#include "kvevict/engine.hpp"
#include "kvevict/harness.hpp"

namespace {

using namespace kvevict;

CaoteInput random_input(std::size_t n, std::size_t d, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> dist(0.0, 1.0);
    Vector logits(n);
    for (double& x : logits) x = dist(rng);
    Matrix v(n, d);
    for (double& x : v.data()) x = dist(rng);
    return {{softmax(logits), true}, std::move(v)};
}

void BM_CaoteFull(benchmark::State& state) {
    const auto in = random_input(static_cast<std::size_t>(state.range(0)), 16, 1);
    for (auto _ : state) benchmark::DoNotOptimize(caote_scores(in));
    state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_CaoteFast(benchmark::State& state) {
    const auto in = random_input(static_cast<std::size_t>(state.range(0)), 16, 1);
    for (auto _ : state) benchmark::DoNotOptimize(fast_caote_scores(in));
    state.SetItemsProcessed(state.iterations() * state.range(0));
}

// All n oracle evaluations: the quadratic cost the closed form avoids.
void BM_OracleAllCandidates(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    const auto in = random_input(n, 16, 1);
    for (auto _ : state) {
        double acc = 0.0;
        for (std::size_t j = 0; j < n; ++j) acc += eviction_error_oracle(in, j);
        benchmark::DoNotOptimize(acc);
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_EvictPass(benchmark::State& state) {
    const auto budget = static_cast<std::size_t>(state.range(0));
    const auto mode = static_cast<CaoteMode>(state.range(1));
    const std::size_t m = 16, n = budget + m;
    const auto in = random_input(n, 16, 2);
    EvictionConfig cfg;
    cfg.policy = Policy::H2O;
    cfg.caote_mode = mode;
    cfg.budget = budget;
    cfg.block_size = m;

    HeadCache base;
    base.policy = PolicyState(Policy::H2O, {});
    for (std::size_t i = 0; i < n; ++i) base.append(in.values.row(i), in.values.row(i), i);
    const std::vector<AttentionRow> rows{{in.alpha.scores, n - 1}};

    for (auto _ : state) {
        state.PauseTiming();
        HeadCache cache = base;
        state.ResumeTiming();
        benchmark::DoNotOptimize(evict_pass(cache, rows, cfg));
    }
    state.SetLabel(std::string(to_string(mode)));
}

void BM_RunSequence(benchmark::State& state) {
    RunSpec spec;
    const ToyModel model = model_for_seed(spec, 1);
    const Matrix h = make_prompt(1, spec.seq_len, model.config.d_model, 1.0);
    const DenseOutput dense = dense_forward(model, h);
    EvictionConfig cfg;
    cfg.caote_mode = static_cast<CaoteMode>(state.range(0));
    for (auto _ : state) benchmark::DoNotOptimize(run_sequence(model, h, spec.n_generate, cfg, &dense));
    state.SetLabel(std::string(to_string(cfg.caote_mode)));
}

BENCHMARK(BM_CaoteFull)->RangeMultiplier(4)->Range(16, 1024);
BENCHMARK(BM_CaoteFast)->RangeMultiplier(4)->Range(16, 1024);
BENCHMARK(BM_OracleAllCandidates)->RangeMultiplier(4)->Range(16, 1024);
BENCHMARK(BM_EvictPass)->ArgsProduct({{64, 256}, {0, 1, 2}});
BENCHMARK(BM_RunSequence)->Arg(0)->Arg(1)->Arg(2)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
