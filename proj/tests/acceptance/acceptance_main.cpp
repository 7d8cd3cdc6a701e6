// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
// failure.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "kvevict/caote.hpp"
#include "kvevict/engine.hpp"
#include "kvevict/harness.hpp"

#ifndef KV_EVICT_CLI
#error "KV_EVICT_CLI must name the kv-evict executable"
#endif

namespace {

using namespace kvevict;
using Clock = std::chrono::steady_clock;

struct Outcome {
    bool passed = false;
    std::string detail;
};

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

Outcome theorem_check(const TheoremCheck& c, std::size_t min_trials) {
    const bool ok = c.passed && c.trials >= min_trials;
    return {ok, fmt::format("trials={} max_error={:.3e} tol={:.0e}", c.trials, c.max_error, c.tolerance)};
}

Outcome caote_equivalence() {
    const auto t0 = Clock::now();
    const auto c = check_caote_equals_eviction_error(1000, 2, 1e-9);
    const double secs = seconds_since(t0);
    auto out = theorem_check(c, 1000);
    out.passed = out.passed && secs < 10.0;
    out.detail += fmt::format(" time={:.2f}s", secs);
    return out;
}

Outcome renormalization() { return theorem_check(check_renormalization(1000, 1, 1e-12), 1000); }

Outcome h2o_mass() {
    // Every n in [1, 128], plus the randomized suite.
    std::mt19937_64 rng(3);
    std::normal_distribution<double> logit(0.0, 2.0);
    double worst = 0.0;
    for (std::size_t n = 1; n <= 128; ++n) {
        PolicyState state(Policy::H2O, {});
        std::vector<AttentionRow> rows;
        for (std::size_t i = 0; i < n; ++i) {
            Vector z(i + 1);
            for (double& x : z) x = logit(rng);
            rows.push_back({softmax(z), i});
        }
        accumulate_rows(state, rows);
        double total = 0.0;
        for (double x : score_h2o(state).scores) total += x;
        worst = std::max(worst, std::abs(total - static_cast<double>(n)));
    }
    const auto suite = check_h2o_score_mass(1000, 3, 1e-9);
    return {worst <= 1e-9 && suite.passed,
            fmt::format("n=1..128 max |mass-n|={:.3e}; random suite trials={} max={:.3e}", worst,
                        suite.trials, suite.max_error)};
}

Outcome logit_identity() {
    const auto general = check_logit_identity(100, 4, 1e-9, false);
    const auto case1 = check_logit_identity(100, 5, 1e-9, true);
    return {general.passed && case1.passed && general.trials >= 100 && case1.trials >= 100,
            fmt::format("general max_error={:.3e}, zero-ffn max_error={:.3e} over {}+{} instances",
                        general.max_error, case1.max_error, general.trials, case1.trials)};
}

Outcome greedy_optimality() {
    const RunSpec spec;
    std::size_t checked = 0, violations = 0;
    double worst = 0.0;
    for (Policy p : {Policy::H2O, Policy::TOVA, Policy::SnapKV}) {
        EvictionConfig cfg = spec.cfg;
        cfg.policy = p;
        cfg.caote_mode = CaoteMode::Full;
        cfg.budget = spec.budgets.front();
        cfg.block_size = spec.block_sizes.front();
        cfg.params.sink_count = spec.cfg.params.sink_count;
        cfg.audit = true;
        const std::size_t prefill_steps = (spec.seq_len - spec.n_generate + cfg.block_size - 1) / cfg.block_size;
        for (std::uint64_t seed : spec.seeds) {
            const ToyModel model = model_for_seed(spec, seed);
            const Matrix h = make_prompt(seed, spec.seq_len, model.config.d_model, spec.hidden_scale);
            const auto res = run_sequence(model, h, spec.n_generate, cfg);
            for (const auto& d : res.decisions) {
                if (d.step < prefill_steps) continue;
                if (d.evicted.size() != 1 || d.oracle_errors.size() != d.candidate_count) {
                    ++violations;
                    continue;
                }
                const double best = *std::min_element(d.oracle_errors.begin(), d.oracle_errors.end());
                const double got = d.oracle_errors[d.evicted[0]];
                const double base = d.oracle_errors[d.base_evicted.at(0)];
                const double excess = best > 0.0 ? (got - best) / best : (got > 0.0 ? 1.0 : 0.0);
                worst = std::max(worst, excess);
                if (excess > 1e-9 || got > base * (1.0 + 1e-9)) ++violations;
                ++checked;
            }
        }
    }
    return {checked > 0 && violations == 0,
            fmt::format("{} generation-step decisions over 3 policies x 20 seeds, violations={}, "
                        "worst relative excess={:.3e}",
                        checked, violations, worst)};
}

Outcome block_decomposition() {
    const RunSpec spec;
    double worst = 0.0;
    for (std::uint64_t seed : {1, 2, 3, 4, 5}) {
        const ToyModel model = model_for_seed(spec, seed);
        const Matrix h = make_prompt(seed, spec.seq_len, model.config.d_model, spec.hidden_scale);
        const DenseOutput dense = dense_forward(model, h);
        const double ref = l2_norm(dense.hidden.data());
        for (std::size_t m : {std::size_t{1}, std::size_t{16}, spec.seq_len}) {
            EvictionConfig cfg;
            cfg.budget = spec.seq_len;
            cfg.block_size = m;
            const auto res = run_sequence(model, h, 0, cfg, &dense);
            worst = std::max(worst, l2_norm(subtract(res.outputs.data(), dense.hidden.data())) / ref);
            if (!res.decisions.empty()) worst = std::max(worst, 1.0);
        }
    }
    return {worst <= 1e-9, fmt::format("block sizes {{1,16,full}}, 5 seeds, max relative error={:.3e}", worst)};
}

Outcome fig2_gates() {
    const auto t0 = Clock::now();
    const auto report = cmd_deviation(RunSpec{});
    const double secs = seconds_since(t0);
    auto agg = [&](Policy p, CaoteMode m) { return report.aggregate(p, m); };
    const double h_off = agg(Policy::H2O, CaoteMode::Off), h_on = agg(Policy::H2O, CaoteMode::Full);
    const double t_off = agg(Policy::TOVA, CaoteMode::Off), t_on = agg(Policy::TOVA, CaoteMode::Full);
    const double s_off = agg(Policy::SnapKV, CaoteMode::Off), s_on = agg(Policy::SnapKV, CaoteMode::Full);
    const bool ok = h_on <= h_off && t_on <= 1.05 * t_off && s_on <= 1.05 * s_off && secs < 120.0;
    return {ok, fmt::format("h2o {:.4f}->{:.4f}, tova {:.4f}->{:.4f}, snapkv {:.4f}->{:.4f}, time={:.2f}s",
                            h_off, h_on, t_off, t_on, s_off, s_on, secs)};
}

Outcome budget_safety() {
    RunSpec spec;
    spec.seeds = {1, 2, 3};
    std::size_t runs = 0, violations = 0, worst_excess = 0;
    for (Policy p : {Policy::H2O, Policy::TOVA, Policy::SnapKV, Policy::Sink}) {
        for (CaoteMode mode : {CaoteMode::Off, CaoteMode::Full, CaoteMode::Fast}) {
            for (std::size_t b : {1, 16, 32, 64, 128}) {
                for (std::size_t m : {1, 4, 16, 64}) {
                    for (auto agg : {HeadAggregation::PerHead, HeadAggregation::MeanHeads}) {
                        if (agg == HeadAggregation::MeanHeads && m != 16) continue;
                        EvictionConfig cfg;
                        cfg.policy = p;
                        cfg.caote_mode = mode;
                        cfg.budget = b;
                        cfg.block_size = m;
                        cfg.aggregate = agg;
                        for (std::uint64_t seed : spec.seeds) {
                            const ToyModel model = model_for_seed(spec, seed);
                            const Matrix h = make_prompt(seed, spec.seq_len, model.config.d_model, 1.0);
                            try {
                                const auto res = run_sequence(model, h, spec.n_generate, cfg);
                                const std::size_t peak =
                                    std::max(res.max_cache_after_eviction, res.final_cache.max_head_size());
                                if (peak > b) {
                                    ++violations;
                                    worst_excess = std::max(worst_excess, peak - b);
                                }
                                for (const auto& d : res.decisions)
                                    if (d.retained.size() != std::min(b, d.candidate_count)) ++violations;
                            } catch (const std::logic_error&) {
                                ++violations;
                            }
                            ++runs;
                        }
                    }
                }
            }
        }
    }
    return {violations == 0, fmt::format("{} runs (4 policies x 3 modes x budgets {{1,16,32,64,128}} x blocks "
                                         "{{1,4,16,64}}), violations={}, worst excess={}",
                                         runs, violations, worst_excess)};
}

Outcome determinism() {
    RunSpec spec;
    spec.seeds = {1, 2, 3, 4};
    RunSpec needle = spec;
    needle.budgets = {32};
    RunSpec sweep = spec;
    sweep.seeds = {1, 2};
    sweep.budgets = {16, 64};
    sweep.block_sizes = {4, 16};
    RunSpec theorems;
    theorems.trials = 200;

    std::vector<std::pair<std::string, std::function<std::string()>>> outputs{
        {"deviation.csv", [&] { return deviation_csv(cmd_deviation(spec)); }},
        {"deviation.json", [&] { return deviation_json(cmd_deviation(spec)); }},
        {"needle.json", [&] { return needle_json(cmd_needle(needle)); }},
        {"needle.csv", [&] { return needle_csv(cmd_needle(needle)); }},
        {"sweep.csv", [&] { return sweep_csv(cmd_sweep(sweep)); }},
        {"theorems.json", [&] { return theorems_json(cmd_theorems(theorems)); }},
    };
    std::vector<std::string> differing;
    for (const auto& [name, produce] : outputs)
        if (produce() != produce()) differing.push_back(name);
    return {differing.empty(), differing.empty()
                                   ? fmt::format("{} outputs byte-identical across two runs", outputs.size())
                                   : fmt::format("differs: {}", fmt::join(differing, ", "))};
}

Outcome mutation_check() {
    const std::string cli = KV_EVICT_CLI;
    const int clean = std::system(("\"" + cli + "\" theorems --trials 100 > /dev/null").c_str());
    const int sabotaged = std::system(("\"" + cli + "\" theorems --trials 100 --sabotage > /dev/null").c_str());
    return {clean == 0 && sabotaged != 0,
            fmt::format("clean exit status={}, sabotaged exit status={}", clean, sabotaged)};
}

}  // namespace

int main() {
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"caote-equals-eviction-error", caote_equivalence},
        {"renormalization-matches-softmax", renormalization},
        {"h2o-score-mass-equals-n", h2o_mass},
        {"logit-error-identity", logit_identity},
        {"greedy-optimality", greedy_optimality},
        {"block-decomposition-exact", block_decomposition},
        {"deviation-gates", fig2_gates},
        {"budget-safety", budget_safety},
        {"determinism", determinism},
        {"mutation-check", mutation_check},
    };
    int failures = 0;
    for (const auto& [name, run] : criteria) {
        Outcome o;
        try {
            o = run();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        fmt::print("{} {}: {}\n", o.passed ? "PASS" : "FAIL", name, o.detail);
        std::fflush(stdout);
        if (!o.passed) ++failures;
    }
    fmt::print("{} of {} criteria passed\n", criteria.size() - failures, criteria.size());
    return failures == 0 ? 0 : 1;
}
