#include "kvevict/engine.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <stdexcept>
#include <string>

#include <fmt/format.h>

#include "json.hpp"

namespace kvevict {

std::string_view to_string(HeadAggregation a) {
    return a == HeadAggregation::PerHead ? "per-head" : "mean-heads";
}

HeadAggregation parse_aggregation(std::string_view name) {
    if (name == "per-head") return HeadAggregation::PerHead;
    if (name == "mean-heads") return HeadAggregation::MeanHeads;
    throw std::invalid_argument("unknown aggregation '" + std::string(name) + "'");
}

void validate(const EvictionConfig& cfg) {
    if (cfg.budget == 0) throw std::invalid_argument("budget must be >= 1");
    if (cfg.block_size == 0) throw std::invalid_argument("block size must be >= 1");
    if (cfg.params.window == 0) throw std::invalid_argument("snapkv window must be >= 1");
    if (cfg.params.pool_kernel == 0 || cfg.params.pool_kernel % 2 == 0) {
        throw std::invalid_argument("snapkv pool kernel must be odd and >= 1");
    }
    if (cfg.policy == Policy::Sink && cfg.params.sink_count == 0 && sink_recent_window(cfg) == 0) {
        throw std::invalid_argument("sink policy needs a sink count or a recent window");
    }
}

std::size_t sink_recent_window(const EvictionConfig& cfg) {
    if (cfg.params.recent_window != 0) return cfg.params.recent_window;
    return cfg.budget > cfg.params.sink_count ? cfg.budget - cfg.params.sink_count : 0;
}

namespace {

ScoreVector policy_scores(const HeadCache& cache, const EvictionConfig& cfg) {
    return base_scores(cache.policy, cache.positions, sink_recent_window(cfg));
}

// Base scores pushed through the configured CAOTE transform.
Vector eviction_scores(const ScoreVector& base, const HeadCache& cache, const EvictionConfig& cfg) {
    switch (cfg.caote_mode) {
        case CaoteMode::Off: return base.scores;
        case CaoteMode::Full: return caote_scores_general(base, cache.values).c;
        case CaoteMode::Fast: return fast_caote_scores_general(base, cache.values).c;
    }
    throw std::logic_error("unreachable caote mode");
}

void protect_recent(Vector& scores, std::size_t n_recent) {
    const std::size_t n = scores.size();
    for (std::size_t i = n - std::min(n, n_recent); i < n; ++i) scores[i] = kInfiniteScore;
}

std::vector<std::size_t> complement(std::span<const std::size_t> retained, std::size_t n) {
    std::vector<std::size_t> out;
    std::size_t k = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (k < retained.size() && retained[k] == i) {
            ++k;
        } else {
            out.push_back(i);
        }
    }
    return out;
}

void audit(EvictionDecision& d, const ScoreVector& base, const HeadCache& cache,
           const EvictionConfig& cfg) {
    Vector protected_base = base.scores;
    protect_recent(protected_base, cfg.protect_recent);
    d.base_evicted = complement(top_b_retain({protected_base, false}, cfg.budget), cache.size());

    double total = 0.0;
    for (double x : base.scores) total += x;
    if (cache.size() < 2 || !(total > 0.0)) return;
    const CaoteInput in{base.normalized ? base : normalize_scores(base), cache.values};
    d.oracle_errors.resize(cache.size());
    for (std::size_t j = 0; j < cache.size(); ++j) {
        d.oracle_errors[j] = in.alpha.scores[j] >= 1.0 - kSoleHolderMargin
                                 ? kInfiniteScore
                                 : eviction_error_oracle(in, j);
    }
}

EvictionDecision make_decision(const HeadCache& cache, std::size_t layer, std::size_t head,
                               std::size_t step) {
    EvictionDecision d;
    d.layer = layer;
    d.head = head;
    d.step = step;
    d.candidate_count = cache.size();
    return d;
}

}  // namespace

EvictionDecision evict_pass(HeadCache& cache, std::span<const AttentionRow> new_rows,
                            const EvictionConfig& cfg, std::size_t layer, std::size_t head,
                            std::size_t step) {
    accumulate_rows(cache.policy, new_rows);
    EvictionDecision d = make_decision(cache, layer, head, step);
    if (cache.size() <= cfg.budget) {
        d.retained = complement({}, cache.size());
        return d;
    }

    const ScoreVector base = policy_scores(cache, cfg);
    d.base_scores = base.scores;
    Vector final_scores = eviction_scores(base, cache, cfg);
    if (cfg.caote_mode != CaoteMode::Off) d.caote_scores = final_scores;
    protect_recent(final_scores, cfg.protect_recent);

    d.retained = top_b_retain({final_scores, false}, cfg.budget);
    d.evicted = complement(d.retained, cache.size());
    if (cfg.audit) audit(d, base, cache, cfg);
    cache.retain(d.retained);
    return d;
}

std::vector<EvictionDecision> evict_layer(LayerCache& layer,
                                          const std::vector<std::vector<AttentionRow>>& rows,
                                          const EvictionConfig& cfg, std::size_t layer_index,
                                          std::size_t step) {
    if (rows.size() != layer.heads.size()) {
        throw std::invalid_argument("evict_layer: attention rows for " +
                                    std::to_string(rows.size()) + " heads, cache has " +
                                    std::to_string(layer.heads.size()));
    }
    std::vector<EvictionDecision> out;

    if (cfg.aggregate == HeadAggregation::PerHead) {
        for (std::size_t h = 0; h < layer.heads.size(); ++h) {
            auto d = evict_pass(layer.heads[h], rows[h], cfg, layer_index, h, step);
            if (!d.evicted.empty()) out.push_back(std::move(d));
        }
        return out;
    }

    // Mean over heads: every head keeps the same slots.
    const std::size_t n = layer.heads.empty() ? 0 : layer.heads[0].size();
    for (std::size_t h = 0; h < layer.heads.size(); ++h) {
        accumulate_rows(layer.heads[h].policy, rows[h]);
        if (layer.heads[h].size() != n || layer.heads[h].positions != layer.heads[0].positions) {
            throw std::logic_error("mean-heads aggregation needs identical head caches");
        }
    }
    if (n <= cfg.budget) return out;

    std::vector<ScoreVector> bases;
    Vector mean(n, 0.0);
    for (auto& head : layer.heads) {
        bases.push_back(policy_scores(head, cfg));
        const Vector s = eviction_scores(bases.back(), head, cfg);
        for (std::size_t i = 0; i < n; ++i) mean[i] += s[i];
        EvictionDecision d = make_decision(head, layer_index, out.size(), step);
        d.base_scores = bases.back().scores;
        if (cfg.caote_mode != CaoteMode::Off) d.caote_scores = s;
        out.push_back(std::move(d));
    }
    for (double& x : mean) x /= static_cast<double>(layer.heads.size());
    protect_recent(mean, cfg.protect_recent);
    const auto retained = top_b_retain({mean, false}, cfg.budget);
    const auto evicted = complement(retained, n);
    for (std::size_t h = 0; h < layer.heads.size(); ++h) {
        out[h].retained = retained;
        out[h].evicted = evicted;
        if (cfg.audit) audit(out[h], bases[h], layer.heads[h], cfg);
        layer.heads[h].retain(retained);
    }
    return out;
}

double deviation_metric(const Matrix& dense_out, const Matrix& evicted_out) {
    if (dense_out.rows() != evicted_out.rows() || dense_out.cols() != evicted_out.cols()) {
        throw std::invalid_argument("deviation_metric shape mismatch: " +
                                    dense_out.shape_string() + " vs " +
                                    evicted_out.shape_string());
    }
    const double diff = squared_norm(subtract(dense_out.data(), evicted_out.data()));
    const double ref = squared_norm(dense_out.data());
    if (ref == 0.0) return diff == 0.0 ? 0.0 : kInfiniteScore;
    return diff / ref;
}

SequenceResult run_sequence(const ToyModel& model, const Matrix& hidden_all,
                            std::size_t n_generate, const EvictionConfig& cfg,
                            const DenseOutput* dense) {
    validate(cfg);
    const std::size_t t = hidden_all.rows();
    if (t == 0 || n_generate >= t) {
        throw std::invalid_argument("run_sequence: need at least one prompt token (" +
                                    std::to_string(t) + " rows, " + std::to_string(n_generate) +
                                    " generated)");
    }
    const std::size_t prompt_len = t - n_generate;
    const std::size_t d_model = model.config.d_model;

    SequenceResult res;
    res.outputs = Matrix(t, d_model);
    KvCache cache = KvCache::empty(model, cfg.policy, cfg.params);
    std::size_t step = 0;
    std::size_t last_pass_step = 0;

    res.last_query_rows.assign(model.config.n_layers,
                               std::vector<AttentionRow>(model.config.n_heads));
    const LayerHook hook = [&](std::size_t l, LayerCache& layer,
                               const std::vector<std::vector<AttentionRow>>& rows) {
        std::vector<std::vector<std::size_t>> before(layer.heads.size());
        for (std::size_t h = 0; h < layer.heads.size(); ++h) before[h] = layer.heads[h].positions;

        auto decisions = evict_layer(layer, rows, cfg, l, step);

        for (std::size_t h = 0; h < layer.heads.size(); ++h) {
            const AttentionRow& last = rows[h].back();
            const auto& kept = layer.heads[h].positions;
            AttentionRow survived{Vector(kept.size(), 0.0), last.query_position};
            double total = 0.0;
            for (std::size_t i = 0, k = 0; i < before[h].size() && k < kept.size(); ++i) {
                if (before[h][i] != kept[k]) continue;
                survived.weights[k++] = last.weights[i];
                total += last.weights[i];
            }
            if (total > 0.0)
                for (double& w : survived.weights) w /= total;
            res.last_query_rows[l][h] = std::move(survived);
        }

        if (decisions.empty()) return;
        if (res.eviction_passes == 0 || last_pass_step != step) ++res.eviction_passes;
        last_pass_step = step;
        for (const auto& head : layer.heads) {
            if (head.size() > cfg.budget) {
                throw std::logic_error("budget violated: head holds " + std::to_string(head.size()) +
                                       " tokens, budget " + std::to_string(cfg.budget));
            }
            res.max_cache_after_eviction = std::max(res.max_cache_after_eviction, head.size());
        }
        for (auto& d : decisions) res.decisions.push_back(std::move(d));
    };

    auto record = [&](std::size_t position, const std::vector<Matrix>& attn, std::size_t row) {
        StepRecord r;
        r.step = step;
        r.position = position;
        for (const auto& a : attn) r.attn_outputs.emplace_back(a.row(row).begin(), a.row(row).end());
        res.records.push_back(std::move(r));
    };

    for (std::size_t start = 0; start < prompt_len; start += cfg.block_size) {
        const std::size_t m = std::min(cfg.block_size, prompt_len - start);
        Matrix block(m, d_model);
        for (std::size_t i = 0; i < m; ++i) {
            std::copy(hidden_all.row(start + i).begin(), hidden_all.row(start + i).end(),
                      block.row(i).begin());
        }
        const BlockOutput out = block_prefill(model, block, cache, start, cfg.attention, hook);
        for (std::size_t i = 0; i < m; ++i) {
            std::copy(out.hidden.row(i).begin(), out.hidden.row(i).end(),
                      res.outputs.row(start + i).begin());
        }
        record(start + m - 1, out.attn_outputs, m - 1);
        if (start + m == prompt_len) res.logits.push_back(lm_logits(model, out.hidden.row(m - 1)));
        ++step;
    }

    for (std::size_t pos = prompt_len; pos < t; ++pos) {
        StepOutput out = generate_step(model, hidden_all.row(pos), cache, pos, cfg.attention, hook);
        std::copy(out.hidden.begin(), out.hidden.end(), res.outputs.row(pos).begin());
        res.logits.push_back(std::move(out.logits));
        std::vector<Matrix> attn;
        for (auto& a : out.attn_outputs) attn.emplace_back(1, a.size(), std::move(a));
        record(pos, attn, 0);
        ++step;
    }

    res.final_cache = std::move(cache);

    DenseOutput local;
    if (dense == nullptr) {
        local = dense_forward(model, hidden_all, cfg.attention);
        dense = &local;
    }
    for (const auto& r : res.records) {
        for (std::size_t l = 0; l < r.attn_outputs.size(); ++l) {
            const auto ref = dense->attn_outputs.at(l).row(r.position);
            const Matrix dense_row(1, d_model, Vector(ref.begin(), ref.end()));
            const Matrix evicted_row(1, d_model, r.attn_outputs[l]);
            const double sq = squared_norm(subtract(dense_row.data(), evicted_row.data()));
            res.trace.rows.push_back({l, r.step, deviation_metric(dense_row, evicted_row),
                                      sq / static_cast<double>(d_model)});
        }
    }
    return res;
}

namespace {

std::vector<double> mean_per_layer(const DeviationTrace& trace, std::size_t n_layers,
                                   double DeviationTrace::Row::*field) {
    std::vector<double> sum(n_layers, 0.0);
    std::vector<std::size_t> count(n_layers, 0);
    for (const auto& r : trace.rows) {
        if (r.layer >= n_layers) throw std::out_of_range("trace layer out of range");
        sum[r.layer] += r.*field;
        ++count[r.layer];
    }
    for (std::size_t l = 0; l < n_layers; ++l)
        if (count[l] > 0) sum[l] /= static_cast<double>(count[l]);
    return sum;
}

}  // namespace

std::vector<double> mean_nmse_per_layer(const DeviationTrace& trace, std::size_t n_layers) {
    return mean_per_layer(trace, n_layers, &DeviationTrace::Row::nmse);
}

std::vector<double> mean_mse_per_layer(const DeviationTrace& trace, std::size_t n_layers) {
    return mean_per_layer(trace, n_layers, &DeviationTrace::Row::mse);
}

void write_trace_csv(std::ostream& out, const DeviationTrace& trace) {
    out << "layer,step,nmse\n";
    for (const auto& r : trace.rows) out << fmt::format("{},{},{}\n", r.layer, r.step, r.nmse);
}

std::string decision_to_json(const EvictionDecision& d) {
    auto scores = [](const Vector& v) {
        nlohmann::json arr = nlohmann::json::array();
        for (double x : v) {
            if (std::isfinite(x)) {
                arr.push_back(x);
            } else {
                arr.push_back(nullptr);
            }
        }
        return arr;
    };
    nlohmann::json j;
    j["layer"] = d.layer;
    j["head"] = d.head;
    j["step"] = d.step;
    j["candidate_count"] = d.candidate_count;
    j["base_scores"] = scores(d.base_scores);
    j["caote_scores"] = scores(d.caote_scores);
    j["retained"] = d.retained;
    j["evicted"] = d.evicted;
    if (!d.oracle_errors.empty()) j["oracle_errors"] = scores(d.oracle_errors);
    return j.dump();
}

void write_decisions_jsonl(std::ostream& out, std::span<const EvictionDecision> decisions) {
    for (const auto& d : decisions) out << decision_to_json(d) << '\n';
}

}  // namespace kvevict
