#include "kvevict/caote.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace kvevict {

std::string_view to_string(CaoteMode mode) {
    switch (mode) {
        case CaoteMode::Off: return "off";
        case CaoteMode::Full: return "full";
        case CaoteMode::Fast: return "fast";
    }
    return "unknown";
}

CaoteMode parse_caote_mode(std::string_view name) {
    if (name == "off") return CaoteMode::Off;
    if (name == "full") return CaoteMode::Full;
    if (name == "fast") return CaoteMode::Fast;
    throw std::invalid_argument("unknown caote mode '" + std::string(name) + "'");
}

namespace {

void check_input(const CaoteInput& in) {
    const auto& a = in.alpha.scores;
    if (a.size() < 2) throw std::invalid_argument("CAOTE needs at least 2 cached tokens");
    if (in.values.rows() != a.size()) {
        throw std::invalid_argument("CAOTE: " + std::to_string(a.size()) +
                                    " weights for values " + in.values.shape_string());
    }
    double total = 0.0;
    for (double x : a) {
        if (!(x >= 0.0)) throw std::invalid_argument("CAOTE: attention weights must be non-negative");
        total += x;
    }
    if (std::abs(total - 1.0) > kSimplexTolerance) {
        throw std::invalid_argument("CAOTE: attention weights sum to " + std::to_string(total) +
                                    ", expected 1");
    }
}

// alpha_j / (1 - alpha_j) * ||reference - v_j|| for every j.
Vector weighted_distances(const Vector& alpha, const Matrix& values, const Vector& reference) {
    Vector c(alpha.size());
    for (std::size_t j = 0; j < alpha.size(); ++j) {
        if (alpha[j] >= 1.0 - kSoleHolderMargin) {
            c[j] = kInfiniteScore;
            continue;
        }
        const auto v = values.row(j);
        double sq = 0.0;
        for (std::size_t d = 0; d < v.size(); ++d) {
            const double diff = reference[d] - v[d];
            sq += diff * diff;
        }
        c[j] = alpha[j] / (1.0 - alpha[j]) * std::sqrt(sq);
    }
    return c;
}

ScoreVector on_simplex(const ScoreVector& base) {
    return base.normalized ? base : normalize_scores(base);
}

}  // namespace

CaoteScores caote_scores(const CaoteInput& in) {
    check_input(in);
    const Vector x_attn = weighted_row_sum(in.alpha.scores, in.values);
    return {weighted_distances(in.alpha.scores, in.values, x_attn), CaoteMode::Full};
}

CaoteScores caote_scores_general(const ScoreVector& base, const Matrix& values) {
    return caote_scores(CaoteInput{on_simplex(base), values});
}

CaoteScores fast_caote_scores(const CaoteInput& in) {
    check_input(in);
    const Vector mean = column_mean(in.values);
    return {weighted_distances(in.alpha.scores, in.values, mean), CaoteMode::Fast};
}

CaoteScores fast_caote_scores_general(const ScoreVector& base, const Matrix& values) {
    return fast_caote_scores(CaoteInput{on_simplex(base), values});
}

ScoreVector renormalize_after_eviction(const ScoreVector& alpha, std::size_t j) {
    const auto& a = alpha.scores;
    if (j >= a.size()) throw std::out_of_range("renormalize_after_eviction: index out of range");
    if (a[j] >= 1.0 - kSoleHolderMargin) {
        throw std::invalid_argument("cannot evict sole mass holder");
    }
    const double keep = 1.0 - a[j];
    ScoreVector out;
    out.normalized = true;
    out.scores.reserve(a.size() - 1);
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (i != j) out.scores.push_back(a[i] / keep);
    }
    return out;
}

double eviction_error_oracle(const CaoteInput& in, std::size_t j) {
    const auto& a = in.alpha.scores;
    if (a.size() < 2) throw std::invalid_argument("eviction oracle needs at least 2 tokens");
    if (in.values.rows() != a.size()) throw std::invalid_argument("eviction oracle: shape mismatch");

    Vector before(in.values.cols(), 0.0);
    for (std::size_t i = 0; i < a.size(); ++i) {
        const auto v = in.values.row(i);
        for (std::size_t d = 0; d < v.size(); ++d) before[d] += a[i] * v[d];
    }

    const ScoreVector survivors = renormalize_after_eviction(in.alpha, j);
    std::vector<std::size_t> kept(a.size());
    std::iota(kept.begin(), kept.end(), 0);
    kept.erase(kept.begin() + static_cast<std::ptrdiff_t>(j));
    Matrix remaining = in.values;
    remaining.keep_rows(kept);

    Vector after(in.values.cols(), 0.0);
    for (std::size_t i = 0; i < remaining.rows(); ++i) {
        const auto v = remaining.row(i);
        for (std::size_t d = 0; d < v.size(); ++d) after[d] += survivors.scores[i] * v[d];
    }
    return l2_norm(subtract(before, after));
}

LogitErrorCheck logit_error_check(const ToyModel& model, const Matrix& hidden_all, std::size_t j,
                                  const AttentionOptions& opts) {
    if (model.config.n_layers != 1) {
        throw std::invalid_argument("compounding not modeled: logit_error_check needs a 1-layer model");
    }
    const std::size_t n = hidden_all.rows();
    if (n < 2) throw std::invalid_argument("logit_error_check needs at least 2 tokens");
    if (j >= n) throw std::out_of_range("logit_error_check: evictee index out of range");

    const DenseOutput dense = dense_forward(model, hidden_all, opts);
    const Vector dense_logits = lm_logits(model, dense.hidden.row(n - 1));
    const auto dense_attn = dense.attn_outputs[0].row(n - 1);

    // Keep every slot except j once the whole sequence is cached; the last
    // token's attention is then recomputed over the survivors.
    KvCache cache = KvCache::empty(model);
    const LayerHook drop_j = [j](std::size_t, LayerCache& layer,
                                 const std::vector<std::vector<AttentionRow>>&) {
        for (auto& head : layer.heads) {
            std::vector<std::size_t> keep;
            for (std::size_t i = 0; i < head.size(); ++i)
                if (head.positions[i] != j) keep.push_back(i);
            head.retain(keep);
        }
    };
    const BlockOutput evicted = block_prefill(model, hidden_all, cache, 0, opts, drop_j);
    const Vector evicted_logits = lm_logits(model, evicted.hidden.row(n - 1));
    const auto evicted_attn = evicted.attn_outputs[0].row(n - 1);

    const auto& w = model.layers[0];
    LogitErrorCheck out;
    out.observed = subtract(dense_logits, evicted_logits);
    out.attn_delta = subtract(dense_attn, evicted_attn);
    const Vector projected = matvec(w.w_o, out.attn_delta);
    out.predicted = matvec(model.w_h, add(projected, matvec(w.w_ffn, projected)));
    return out;
}

}  // namespace kvevict
