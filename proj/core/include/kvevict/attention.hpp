#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "kvevict/numerics.hpp"
#include "kvevict/scoring.hpp"

namespace kvevict {

struct ModelConfig {
    std::size_t n_layers = 2;
    std::size_t n_heads = 4;
    std::size_t d_model = 64;
    std::size_t vocab = 256;
    std::uint64_t seed = 0;

    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct LayerWeights {
    Matrix w_q;
    Matrix w_k;
    Matrix w_v;
    Matrix w_o;
    Matrix w_ffn;

    friend bool operator==(const LayerWeights&, const LayerWeights&) = default;
};

// Desk-scale decoder: per layer x' = x + W_O attn(x), out = x' + W_FFN x',
// then logits = W_H out. No layer norms, no positional encoding.
struct ToyModel {
    ModelConfig config;
    std::vector<LayerWeights> layers;
    Matrix w_h;

    std::size_t d_head() const noexcept { return config.d_model / config.n_heads; }

    friend bool operator==(const ToyModel&, const ToyModel&) = default;
};

void validate_config(const ModelConfig& config);

// Weights i.i.d. uniform(-1/sqrt(d_model), 1/sqrt(d_model)) from a
// seeded mt19937_64, drawn layer by layer (q, k, v, o, ffn) then W_H.
ToyModel init_model(const ModelConfig& config);

// Checks shapes against the config and that every weight is finite.
void validate_model(const ToyModel& model);

struct AttentionOptions {
    // Multiply logits by 1/sqrt(d_head).
    bool scale = true;
};

// Keys/values of one attention head plus the policy bookkeeping for the
// same tokens. positions are original token indices, strictly increasing.
struct HeadCache {
    Matrix keys;
    Matrix values;
    std::vector<std::size_t> positions;
    PolicyState policy;

    std::size_t size() const noexcept { return positions.size(); }
    void append(std::span<const double> key, std::span<const double> value, std::size_t position);
    // Keeps the listed cache slots (ascending) in keys, values, positions
    // and policy state.
    void retain(std::span<const std::size_t> indices);
};

struct LayerCache {
    std::vector<HeadCache> heads;
};

struct KvCache {
    std::vector<LayerCache> layers;

    static KvCache empty(const ToyModel& model, Policy policy = Policy::H2O,
                         PolicyParams params = {});
    std::size_t max_head_size() const;
};

struct AttendResult {
    AttentionRow row;
    Vector output;
};

// Softmax(q K^T [* 1/sqrt(d)]) followed by row^T V over every row of keys.
AttendResult attend_row(std::span<const double> q, const Matrix& keys, const Matrix& values,
                        bool scale_flag);

// Attention of a query at `position` over the cache slots whose position is
// <= position. The returned row spans the whole cache with zeros for masked
// slots. Empty when no slot is visible.
std::optional<AttendResult> attend_causal(std::span<const double> q, const HeadCache& head,
                                          std::size_t position, bool scale_flag);

// Called once per layer after the block's keys/values were appended and its
// attention rows computed, before the layer output is formed. If the hook
// shrinks a head's cache, that head's block outputs are recomputed over the
// surviving slots.
using LayerHook = std::function<void(std::size_t layer, LayerCache& cache,
                                     const std::vector<std::vector<AttentionRow>>& rows_per_head)>;

struct BlockOutput {
    Matrix hidden;                     // m x d_model
    std::vector<Matrix> attn_outputs;  // per layer, m x d_model (heads concatenated, pre W_O)
};

BlockOutput block_prefill(const ToyModel& model, const Matrix& hidden_block, KvCache& cache,
                          std::size_t start_position, const AttentionOptions& opts = {},
                          const LayerHook& hook = {});

struct StepOutput {
    Vector hidden;
    Vector logits;
    std::vector<Vector> attn_outputs;  // per layer
};

StepOutput generate_step(const ToyModel& model, std::span<const double> hidden, KvCache& cache,
                         std::size_t position, const AttentionOptions& opts = {},
                         const LayerHook& hook = {});

struct DenseOutput {
    Matrix hidden;
    std::vector<Matrix> attn_outputs;
};

// Full causal attention with no cache bound.
DenseOutput dense_forward(const ToyModel& model, const Matrix& hidden_all,
                          const AttentionOptions& opts = {});

Vector lm_logits(const ToyModel& model, std::span<const double> hidden);

}  // namespace kvevict
