#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "kvevict/attention.hpp"
#include "kvevict/caote.hpp"
#include "kvevict/scoring.hpp"

namespace kvevict {

enum class HeadAggregation { PerHead, MeanHeads };

std::string_view to_string(HeadAggregation a);
HeadAggregation parse_aggregation(std::string_view name);

struct EvictionConfig {
    Policy policy = Policy::H2O;
    CaoteMode caote_mode = CaoteMode::Off;
    std::size_t budget = 64;
    std::size_t block_size = 16;
    HeadAggregation aggregate = HeadAggregation::PerHead;
    PolicyParams params{};
    // The most recent N candidates are always retained.
    std::size_t protect_recent = 0;
    AttentionOptions attention{};
    // Record per-candidate oracle eviction errors and the base policy's
    // evictees in every decision.
    bool audit = false;
};

void validate(const EvictionConfig& cfg);

// Recent window used by the Sink policy: params.recent_window, or
// budget - sink_count when that is left at 0.
std::size_t sink_recent_window(const EvictionConfig& cfg);

struct EvictionDecision {
    std::size_t layer = 0;
    std::size_t head = 0;
    std::size_t step = 0;
    std::size_t candidate_count = 0;
    Vector base_scores;
    Vector caote_scores;  // empty when caote_mode is Off
    std::vector<std::size_t> retained;
    std::vector<std::size_t> evicted;

    // Audit only.
    Vector oracle_errors;
    std::vector<std::size_t> base_evicted;
};

// One head: fold the block's rows into the policy state, and if the cache
// holds more than cfg.budget tokens score every candidate, keep the top b
// and drop the rest. A cache within budget yields a decision with nothing
// evicted.
EvictionDecision evict_pass(HeadCache& cache, std::span<const AttentionRow> new_rows,
                            const EvictionConfig& cfg, std::size_t layer = 0,
                            std::size_t head = 0, std::size_t step = 0);

// All heads of one layer, honouring cfg.aggregate. Returns one decision per
// head, or nothing when no head exceeded the budget.
std::vector<EvictionDecision> evict_layer(LayerCache& layer,
                                          const std::vector<std::vector<AttentionRow>>& rows,
                                          const EvictionConfig& cfg, std::size_t layer_index,
                                          std::size_t step);

struct DeviationTrace {
    struct Row {
        std::size_t layer = 0;
        std::size_t step = 0;
        double nmse = 0.0;
        double mse = 0.0;
    };
    std::vector<Row> rows;
};

// ||dense - evicted||_F^2 / ||dense||_F^2.
double deviation_metric(const Matrix& dense_out, const Matrix& evicted_out);

struct StepRecord {
    std::size_t step = 0;
    std::size_t position = 0;          // last token of the block / generated token
    std::vector<Vector> attn_outputs;  // per layer, that token's attention output
};

struct SequenceResult {
    Matrix outputs;                 // final hidden state of every token
    std::vector<Vector> logits;     // last prompt token, then each generated token
    std::vector<EvictionDecision> decisions;
    std::vector<StepRecord> records;
    DeviationTrace trace;
    std::size_t eviction_passes = 0;
    std::size_t max_cache_after_eviction = 0;
    KvCache final_cache;
    // [layer][head]: attention of the most recent query over the slots that
    // survived its pass (renormalized), aligned with final_cache positions.
    std::vector<std::vector<AttentionRow>> last_query_rows;
};

// Consumes hidden_all[0, t - n_generate) in blocks of cfg.block_size and
// then the remaining rows one at a time (inputs of generated tokens are
// given, not sampled). The deviation trace compares each step's final-token
// attention output against the dense forward pass; pass a precomputed
// dense result to share it between runs.
SequenceResult run_sequence(const ToyModel& model, const Matrix& hidden_all,
                            std::size_t n_generate, const EvictionConfig& cfg,
                            const DenseOutput* dense = nullptr);

// Mean nmse per layer over all recorded steps.
std::vector<double> mean_nmse_per_layer(const DeviationTrace& trace, std::size_t n_layers);
std::vector<double> mean_mse_per_layer(const DeviationTrace& trace, std::size_t n_layers);

// `layer,step,nmse`
void write_trace_csv(std::ostream& out, const DeviationTrace& trace);
// One JSON object per decision; non-finite scores are written as null.
std::string decision_to_json(const EvictionDecision& d);
void write_decisions_jsonl(std::ostream& out, std::span<const EvictionDecision> decisions);

}  // namespace kvevict
