#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "json.hpp"
#include "kvevict/engine.hpp"
#include "test_util.hpp"

namespace kvevict {
namespace {

HeadCache filled_head(Policy policy, const Matrix& values, PolicyParams params = {}) {
    HeadCache h;
    h.policy = PolicyState(policy, params);
    for (std::size_t i = 0; i < values.rows(); ++i) h.append(values.row(i), values.row(i), i);
    return h;
}

EvictionConfig config(Policy p, CaoteMode m, std::size_t budget, std::size_t block = 16) {
    EvictionConfig cfg;
    cfg.policy = p;
    cfg.caote_mode = m;
    cfg.budget = budget;
    cfg.block_size = block;
    return cfg;
}

ToyModel small_model(std::uint64_t seed) {
    return init_model({.n_layers = 2, .n_heads = 2, .d_model = 8, .vocab = 16, .seed = seed});
}

Matrix prompt(std::uint64_t seed, std::size_t rows) {
    std::mt19937_64 rng(seed);
    return testing::random_matrix(rng, rows, 8);
}

TEST(EvictPass, TovaDropsLowestLastRowWeight) {
    const std::vector<AttentionRow> rows{{{0.1, 0.2, 0.3, 0.4}, 3}};
    HeadCache h3 = filled_head(Policy::TOVA, Matrix(4, 2, 1.0));
    const auto d3 = evict_pass(h3, rows, config(Policy::TOVA, CaoteMode::Off, 3));
    EXPECT_EQ(d3.evicted, std::vector<std::size_t>{0});
    EXPECT_EQ(h3.positions, (std::vector<std::size_t>{1, 2, 3}));

    HeadCache h2 = filled_head(Policy::TOVA, Matrix(4, 2, 1.0));
    const auto d2 = evict_pass(h2, rows, config(Policy::TOVA, CaoteMode::Off, 2));
    EXPECT_EQ(d2.evicted, (std::vector<std::size_t>{0, 1}));
    EXPECT_EQ(h2.positions, (std::vector<std::size_t>{2, 3}));
}

TEST(EvictPass, WithinBudgetIsNoOp) {
    HeadCache h = filled_head(Policy::H2O, Matrix(3, 2, 1.0));
    const auto d = evict_pass(h, std::vector<AttentionRow>{{{0.2, 0.3, 0.5}, 2}},
                              config(Policy::H2O, CaoteMode::Full, 3));
    EXPECT_TRUE(d.evicted.empty());
    EXPECT_EQ(d.retained.size(), 3u);
    EXPECT_EQ(h.size(), 3u);
    EXPECT_EQ(h.policy.accumulated(), (Vector{0.2, 0.3, 0.5}));
}

TEST(EvictPass, CaoteFlipsDecisionAwayFromOutlier) {
    const Matrix values(4, 2, {0, 0, 0.1, 0, 0, 0.1, 10, 10});
    const std::vector<AttentionRow> rows{{{0.25, 0.25, 0.26, 0.24}, 3}};

    HeadCache base_head = filled_head(Policy::H2O, values);
    const auto base = evict_pass(base_head, rows, config(Policy::H2O, CaoteMode::Off, 3));
    EXPECT_EQ(base.evicted, std::vector<std::size_t>{3});

    auto cfg = config(Policy::H2O, CaoteMode::Full, 3);
    cfg.audit = true;
    HeadCache caote_head = filled_head(Policy::H2O, values);
    const auto caote = evict_pass(caote_head, rows, cfg);
    ASSERT_EQ(caote.evicted.size(), 1u);
    EXPECT_NE(caote.evicted[0], 3u);
    EXPECT_EQ(caote.base_evicted, std::vector<std::size_t>{3});
    ASSERT_EQ(caote.oracle_errors.size(), 4u);
    EXPECT_LT(caote.oracle_errors[caote.evicted[0]], caote.oracle_errors[3]);
    for (std::size_t j = 0; j < 4; ++j)
        EXPECT_NEAR(caote.caote_scores[j], caote.oracle_errors[j], 1e-12 * (1 + caote.oracle_errors[j]));
}

TEST(EvictPass, OffModeFollowsBaseScores) {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 30; ++trial) {
        const std::size_t n = testing::random_size(rng, 3, 20);
        HeadCache h = filled_head(Policy::H2O, testing::random_matrix(rng, n, 3));
        const std::vector<AttentionRow> rows{{testing::random_simplex(rng, n), n - 1}};
        const std::size_t b = testing::random_size(rng, 1, n - 1);
        const auto d = evict_pass(h, rows, config(Policy::H2O, CaoteMode::Off, b));
        EXPECT_TRUE(d.caote_scores.empty());
        EXPECT_EQ(d.retained, top_b_retain({rows[0].weights, false}, b));
        EXPECT_EQ(h.size(), b);
    }
}

TEST(EvictPass, ProtectRecentKeepsNewestTokens) {
    auto cfg = config(Policy::H2O, CaoteMode::Full, 3);
    cfg.protect_recent = 3;
    HeadCache h = filled_head(Policy::H2O, Matrix::identity(5));
    const auto d = evict_pass(h, std::vector<AttentionRow>{{{0.6, 0.1, 0.1, 0.1, 0.1}, 4}}, cfg);
    EXPECT_EQ(d.retained, (std::vector<std::size_t>{2, 3, 4}));
}

TEST(EvictPass, SinkKeepsFirstTokens) {
    auto cfg = config(Policy::Sink, CaoteMode::Off, 4);
    cfg.params.sink_count = 2;
    HeadCache h = filled_head(Policy::Sink, Matrix(8, 2, 1.0), cfg.params);
    evict_pass(h, std::vector<AttentionRow>{{Vector(8, 0.125), 7}}, cfg);
    EXPECT_EQ(h.positions, (std::vector<std::size_t>{0, 1, 6, 7}));
}

TEST(EvictLayer, PerHeadDecisionsAreIndependent) {
    LayerCache layer;
    layer.heads.push_back(filled_head(Policy::TOVA, Matrix(3, 1, 1.0)));
    layer.heads.push_back(filled_head(Policy::TOVA, Matrix(3, 1, 1.0)));
    const std::vector<std::vector<AttentionRow>> rows{{{{0.1, 0.5, 0.4}, 2}}, {{{0.5, 0.1, 0.4}, 2}}};
    const auto ds = evict_layer(layer, rows, config(Policy::TOVA, CaoteMode::Off, 2), 0, 0);
    ASSERT_EQ(ds.size(), 2u);
    EXPECT_EQ(layer.heads[0].positions, (std::vector<std::size_t>{1, 2}));
    EXPECT_EQ(layer.heads[1].positions, (std::vector<std::size_t>{0, 2}));
}

TEST(EvictLayer, MeanHeadsKeepsSameSlots) {
    LayerCache layer;
    layer.heads.push_back(filled_head(Policy::TOVA, Matrix(3, 1, 1.0)));
    layer.heads.push_back(filled_head(Policy::TOVA, Matrix(3, 1, 1.0)));
    const std::vector<std::vector<AttentionRow>> rows{{{{0.1, 0.5, 0.4}, 2}}, {{{0.5, 0.2, 0.3}, 2}}};
    auto cfg = config(Policy::TOVA, CaoteMode::Off, 2);
    cfg.aggregate = HeadAggregation::MeanHeads;
    evict_layer(layer, rows, cfg, 0, 0);
    // Means [0.3, 0.35, 0.35].
    EXPECT_EQ(layer.heads[0].positions, (std::vector<std::size_t>{1, 2}));
    EXPECT_EQ(layer.heads[1].positions, layer.heads[0].positions);
}

TEST(EvictLayer, RowCountMismatchThrows) {
    LayerCache layer;
    layer.heads.push_back(filled_head(Policy::H2O, Matrix(2, 1, 1.0)));
    EXPECT_THROW(evict_layer(layer, {}, config(Policy::H2O, CaoteMode::Off, 1), 0, 0),
                 std::invalid_argument);
}

TEST(DeviationMetric, Cases) {
    const Matrix a(1, 2, {1, 0}), z(1, 2);
    EXPECT_EQ(deviation_metric(a, a), 0.0);
    EXPECT_EQ(deviation_metric(a, z), 1.0);
    EXPECT_EQ(deviation_metric(z, z), 0.0);
    EXPECT_EQ(deviation_metric(z, a), kInfiniteScore);
    EXPECT_DOUBLE_EQ(deviation_metric(Matrix(1, 2, {3, 4}), Matrix(1, 2, {3, 3})), 1.0 / 25.0);
    EXPECT_THROW(deviation_metric(a, Matrix(2, 1)), std::invalid_argument);
}

TEST(RunSequence, LargeBudgetMatchesDense) {
    const ToyModel model = small_model(3);
    const Matrix h = prompt(3, 40);
    for (Policy p : {Policy::H2O, Policy::TOVA, Policy::SnapKV}) {
        const auto res = run_sequence(model, h, 8, config(p, CaoteMode::Full, 40, 7));
        EXPECT_EQ(res.eviction_passes, 0u);
        EXPECT_TRUE(res.decisions.empty());
        for (const auto& r : res.trace.rows) EXPECT_LE(r.nmse, 1e-20);
        EXPECT_LE(testing::max_abs_diff(res.outputs.data(), dense_forward(model, h).hidden.data()), 1e-12);
    }
}

TEST(RunSequence, SingleTokenBlocksEvictOncePerStepOverBudget) {
    const auto res = run_sequence(small_model(4), prompt(4, 4), 0, config(Policy::H2O, CaoteMode::Off, 2, 1));
    EXPECT_EQ(res.eviction_passes, 2u);
    EXPECT_EQ(res.final_cache.max_head_size(), 2u);
    EXPECT_EQ(res.max_cache_after_eviction, 2u);
}

TEST(RunSequence, BudgetHeldAcrossPoliciesAndModes) {
    const ToyModel model = small_model(5);
    const Matrix h = prompt(5, 60);
    for (Policy p : {Policy::H2O, Policy::TOVA, Policy::SnapKV, Policy::Sink}) {
        for (CaoteMode m : {CaoteMode::Off, CaoteMode::Full, CaoteMode::Fast}) {
            for (std::size_t b : {1, 5, 16}) {
                const auto res = run_sequence(model, h, 10, config(p, m, b, 8));
                EXPECT_LE(res.final_cache.max_head_size(), b);
                EXPECT_LE(res.max_cache_after_eviction, b);
                EXPECT_EQ(res.logits.size(), 11u);
                for (const auto& d : res.decisions) EXPECT_EQ(d.candidate_count - d.evicted.size(), b);
            }
        }
    }
}

TEST(RunSequence, Deterministic) {
    const ToyModel model = small_model(6);
    const Matrix h = prompt(6, 50);
    const auto cfg = config(Policy::SnapKV, CaoteMode::Full, 12, 5);
    const auto a = run_sequence(model, h, 6, cfg), b = run_sequence(model, h, 6, cfg);
    std::ostringstream ja, jb, ta, tb;
    write_decisions_jsonl(ja, a.decisions);
    write_decisions_jsonl(jb, b.decisions);
    write_trace_csv(ta, a.trace);
    write_trace_csv(tb, b.trace);
    EXPECT_EQ(ja.str(), jb.str());
    EXPECT_EQ(ta.str(), tb.str());
    EXPECT_EQ(a.outputs, b.outputs);
}

TEST(RunSequence, SharedDenseGivesSameTrace) {
    const ToyModel model = small_model(7);
    const Matrix h = prompt(7, 30);
    const DenseOutput dense = dense_forward(model, h);
    const auto cfg = config(Policy::H2O, CaoteMode::Fast, 8, 4);
    std::ostringstream a, b;
    write_trace_csv(a, run_sequence(model, h, 4, cfg).trace);
    write_trace_csv(b, run_sequence(model, h, 4, cfg, &dense).trace);
    EXPECT_EQ(a.str(), b.str());
}

TEST(RunSequence, MeanHeadsKeepsHeadsAligned) {
    auto cfg = config(Policy::H2O, CaoteMode::Full, 6, 4);
    cfg.aggregate = HeadAggregation::MeanHeads;
    const auto res = run_sequence(small_model(8), prompt(8, 30), 5, cfg);
    for (const auto& layer : res.final_cache.layers)
        for (const auto& head : layer.heads) EXPECT_EQ(head.positions, layer.heads[0].positions);
}

TEST(RunSequence, RejectsBadInput) {
    EXPECT_THROW(run_sequence(small_model(9), prompt(9, 4), 4, config(Policy::H2O, CaoteMode::Off, 2)),
                 std::invalid_argument);
    EXPECT_THROW(run_sequence(small_model(9), prompt(9, 4), 0, config(Policy::H2O, CaoteMode::Off, 0)),
                 std::invalid_argument);
}

TEST(Output, TraceCsvAndDecisionJsonl) {
    auto cfg = config(Policy::H2O, CaoteMode::Full, 3, 2);
    cfg.audit = true;
    cfg.protect_recent = 1;
    const auto res = run_sequence(small_model(10), prompt(10, 10), 2, cfg);

    std::ostringstream csv;
    write_trace_csv(csv, res.trace);
    std::istringstream lines(csv.str());
    std::string line;
    std::getline(lines, line);
    EXPECT_EQ(line, "layer,step,nmse");
    std::size_t count = 0;
    while (std::getline(lines, line)) ++count;
    EXPECT_EQ(count, res.trace.rows.size());

    std::ostringstream jsonl;
    write_decisions_jsonl(jsonl, res.decisions);
    std::istringstream jl(jsonl.str());
    ASSERT_FALSE(res.decisions.empty());
    while (std::getline(jl, line)) {
        const auto j = nlohmann::json::parse(line);
        for (const char* k : {"layer", "head", "step", "candidate_count", "base_scores", "caote_scores",
                              "retained", "evicted", "oracle_errors"})
            EXPECT_TRUE(j.contains(k)) << k;
    }
}

TEST(Output, NonFiniteScoresAreNull) {
    EvictionDecision d;
    d.caote_scores = {1.5, kInfiniteScore};
    const auto j = nlohmann::json::parse(decision_to_json(d));
    EXPECT_EQ(j["caote_scores"][0], 1.5);
    EXPECT_TRUE(j["caote_scores"][1].is_null());
    EXPECT_FALSE(j.contains("oracle_errors"));
}

TEST(Aggregation, ParseRoundTrip) {
    for (auto a : {HeadAggregation::PerHead, HeadAggregation::MeanHeads})
        EXPECT_EQ(parse_aggregation(to_string(a)), a);
    EXPECT_THROW(parse_aggregation("sum"), std::invalid_argument);
}

}  // namespace
}  // namespace kvevict
