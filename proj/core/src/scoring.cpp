#include "kvevict/scoring.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>
#include <string>

namespace kvevict {

std::string_view to_string(Policy p) {
    switch (p) {
        case Policy::H2O: return "h2o";
        case Policy::TOVA: return "tova";
        case Policy::SnapKV: return "snapkv";
        case Policy::Sink: return "sink";
    }
    return "unknown";
}

Policy parse_policy(std::string_view name) {
    if (name == "h2o") return Policy::H2O;
    if (name == "tova") return Policy::TOVA;
    if (name == "snapkv") return Policy::SnapKV;
    if (name == "sink") return Policy::Sink;
    throw std::invalid_argument("unknown policy '" + std::string(name) + "'");
}

PolicyState::PolicyState(Policy kind, PolicyParams params) : kind_(kind), params_(params) {
    if (params_.window == 0) throw std::invalid_argument("snapkv window must be >= 1");
    if (params_.pool_kernel == 0 || params_.pool_kernel % 2 == 0) {
        throw std::invalid_argument("snapkv pool kernel must be odd and >= 1");
    }
}

void PolicyState::append_tokens(std::size_t count) {
    accumulated_.resize(accumulated_.size() + count, 0.0);
    if (last_row_) last_row_->weights.resize(accumulated_.size(), 0.0);
    for (auto& r : window_) r.resize(accumulated_.size(), 0.0);
}

namespace {

Vector select(const Vector& v, std::span<const std::size_t> indices) {
    Vector out;
    out.reserve(indices.size());
    for (std::size_t i : indices) out.push_back(v.at(i));
    return out;
}

}  // namespace

void PolicyState::retain(std::span<const std::size_t> indices) {
    accumulated_ = select(accumulated_, indices);
    if (last_row_) last_row_->weights = select(last_row_->weights, indices);
    for (auto& r : window_) r = select(r, indices);
}

void accumulate_rows(PolicyState& state, std::span<const AttentionRow> rows) {
    for (const auto& row : rows) {
        if (row.weights.size() < state.length()) {
            throw std::invalid_argument("attention row of length " +
                                        std::to_string(row.weights.size()) +
                                        " for a cache of length " +
                                        std::to_string(state.length()));
        }
        if (row.weights.size() > state.length()) {
            state.append_tokens(row.weights.size() - state.length());
        }
        for (std::size_t i = 0; i < row.weights.size(); ++i) {
            state.accumulated_[i] += row.weights[i];
        }
        state.last_row_ = row;
        state.window_.push_back(row.weights);
        while (state.window_.size() > state.params_.window) state.window_.pop_front();
        ++state.rows_seen_;
    }
}

ScoreVector score_h2o(const PolicyState& state) {
    if (state.kind() != Policy::H2O) throw std::invalid_argument("score_h2o: policy kind mismatch");
    return {state.accumulated(), false};
}

ScoreVector score_tova(const PolicyState& state) {
    if (!state.last_row()) throw std::logic_error("score_tova: no attention rows observed yet");
    return {state.last_row()->weights, true};
}

Vector max_pool_1d(std::span<const double> v, std::size_t kernel) {
    const std::size_t half = kernel / 2;
    Vector out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
        const std::size_t lo = i >= half ? i - half : 0;
        const std::size_t hi = std::min(v.size() - 1, i + half);
        out[i] = *std::max_element(v.begin() + static_cast<std::ptrdiff_t>(lo),
                                   v.begin() + static_cast<std::ptrdiff_t>(hi) + 1);
    }
    return out;
}

ScoreVector score_snapkv(const PolicyState& state) {
    if (state.kind() != Policy::SnapKV) {
        throw std::invalid_argument("score_snapkv: policy kind mismatch");
    }
    if (state.window_rows().empty()) {
        throw std::logic_error("score_snapkv: no attention rows observed yet");
    }
    Vector summed(state.length(), 0.0);
    for (const auto& r : state.window_rows()) {
        for (std::size_t i = 0; i < summed.size(); ++i) summed[i] += r[i];
    }
    return {max_pool_1d(summed, state.params().pool_kernel), false};
}

ScoreVector score_sink(std::span<const std::size_t> cache_positions, std::size_t sink_count,
                       std::size_t recent_window) {
    const std::size_t n = cache_positions.size();
    Vector scores(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const bool initial = cache_positions[i] < sink_count;
        const bool recent = i + recent_window >= n;
        if (initial || recent) scores[i] = 1.0;
    }
    return {std::move(scores), false};
}

ScoreVector base_scores(const PolicyState& state, std::span<const std::size_t> cache_positions,
                        std::size_t sink_recent_window) {
    switch (state.kind()) {
        case Policy::H2O: return score_h2o(state);
        case Policy::TOVA: return score_tova(state);
        case Policy::SnapKV: return score_snapkv(state);
        case Policy::Sink:
            return score_sink(cache_positions, state.params().sink_count, sink_recent_window);
    }
    throw std::logic_error("unreachable policy kind");
}

ScoreVector normalize_scores(const ScoreVector& h) {
    double total = 0.0;
    for (double x : h.scores) {
        if (x < 0.0) throw std::invalid_argument("scores must be non-negative");
        total += x;
    }
    if (!(total > 0.0)) throw std::invalid_argument("scores sum to zero; cannot normalize");
    Vector out(h.scores.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = h.scores[i] / total;
    return {std::move(out), true};
}

std::vector<std::size_t> top_b_retain(const ScoreVector& scores, std::size_t b) {
    if (b == 0) throw std::invalid_argument("top_b_retain: budget must be >= 1");
    const std::size_t n = scores.scores.size();
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    if (n <= b) return idx;
    const auto& s = scores.scores;
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t c) {
        if (s[a] != s[c]) return s[a] > s[c];
        return a > c;
    });
    idx.resize(b);
    std::sort(idx.begin(), idx.end());
    return idx;
}

}  // namespace kvevict
