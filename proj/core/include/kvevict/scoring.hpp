#pragma once

#include <cstddef>
#include <deque>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "kvevict/numerics.hpp"

namespace kvevict {

// Attention weights of one query over the tokens currently cached. Entries
// for tokens the query cannot see (causal mask) are zero.
struct AttentionRow {
    Vector weights;
    std::size_t query_position = 0;
};

enum class Policy { H2O, TOVA, SnapKV, Sink };

std::string_view to_string(Policy p);
Policy parse_policy(std::string_view name);

struct PolicyParams {
    std::size_t sink_count = 4;
    // Sink policy: number of most recent cached tokens kept. 0 means
    // "budget - sink_count", resolved by the engine.
    std::size_t recent_window = 0;
    // SnapKV observation window (rows) and max-pool kernel (odd).
    std::size_t window = 8;
    std::size_t pool_kernel = 3;
};

struct ScoreVector {
    Vector scores;
    bool normalized = false;
};

// Per-head bookkeeping for the base scoring policies. Every per-token array
// is kept aligned with the cache: append_tokens zero-extends, retain drops
// evicted entries.
class PolicyState {
public:
    PolicyState() = default;
    PolicyState(Policy kind, PolicyParams params);

    Policy kind() const noexcept { return kind_; }
    const PolicyParams& params() const noexcept { return params_; }
    std::size_t length() const noexcept { return accumulated_.size(); }

    const Vector& accumulated() const noexcept { return accumulated_; }
    const std::optional<AttentionRow>& last_row() const noexcept { return last_row_; }
    const std::deque<Vector>& window_rows() const noexcept { return window_; }
    std::size_t rows_seen() const noexcept { return rows_seen_; }

    void append_tokens(std::size_t count);
    void retain(std::span<const std::size_t> indices);

    friend void accumulate_rows(PolicyState& state, std::span<const AttentionRow> rows);

private:
    Policy kind_ = Policy::H2O;
    PolicyParams params_{};
    Vector accumulated_;
    std::optional<AttentionRow> last_row_;
    std::deque<Vector> window_;
    std::size_t rows_seen_ = 0;
};

// Folds attention rows into the state. A row may be longer than the tracked
// length (new tokens are zero-extended first); a shorter row is an error.
void accumulate_rows(PolicyState& state, std::span<const AttentionRow> rows);

ScoreVector score_h2o(const PolicyState& state);
ScoreVector score_tova(const PolicyState& state);
ScoreVector score_snapkv(const PolicyState& state);
ScoreVector score_sink(std::span<const std::size_t> cache_positions, std::size_t sink_count,
                       std::size_t recent_window);

// Dispatches on state.kind(). Sink needs the cache positions and the
// resolved recent window.
ScoreVector base_scores(const PolicyState& state, std::span<const std::size_t> cache_positions,
                        std::size_t sink_recent_window);

ScoreVector normalize_scores(const ScoreVector& h);

// Indices of the b highest scores in ascending index order. Equal scores
// prefer the larger index (the more recent token).
std::vector<std::size_t> top_b_retain(const ScoreVector& scores, std::size_t b);

// Same-length centered max-pool with edge clamping.
Vector max_pool_1d(std::span<const double> v, std::size_t kernel);

}  // namespace kvevict
