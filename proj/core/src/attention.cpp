#include "kvevict/attention.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>
#include <string>

namespace kvevict {

void validate_config(const ModelConfig& config) {
    if (config.n_layers == 0 || config.n_heads == 0 || config.d_model == 0 || config.vocab == 0) {
        throw std::invalid_argument("model dimensions must be positive");
    }
    if (config.d_model % config.n_heads != 0) {
        throw std::invalid_argument("d_model " + std::to_string(config.d_model) +
                                    " is not divisible by n_heads " +
                                    std::to_string(config.n_heads));
    }
}

ToyModel init_model(const ModelConfig& config) {
    validate_config(config);
    std::mt19937_64 rng(config.seed);
    const double s = 1.0 / std::sqrt(static_cast<double>(config.d_model));
    std::uniform_real_distribution<double> dist(-s, s);
    auto draw = [&](std::size_t rows, std::size_t cols) {
        Matrix m(rows, cols);
        for (double& x : m.data()) x = dist(rng);
        return m;
    };

    ToyModel model;
    model.config = config;
    const std::size_t d = config.d_model;
    for (std::size_t l = 0; l < config.n_layers; ++l) {
        LayerWeights w;
        w.w_q = draw(d, d);
        w.w_k = draw(d, d);
        w.w_v = draw(d, d);
        w.w_o = draw(d, d);
        w.w_ffn = draw(d, d);
        model.layers.push_back(std::move(w));
    }
    model.w_h = draw(config.vocab, d);
    return model;
}

void validate_model(const ToyModel& model) {
    validate_config(model.config);
    const std::size_t d = model.config.d_model;
    if (model.layers.size() != model.config.n_layers) {
        throw std::invalid_argument("model has " + std::to_string(model.layers.size()) +
                                    " layers, config says " +
                                    std::to_string(model.config.n_layers));
    }
    auto check = [&](const Matrix& m, std::size_t rows, const char* name) {
        if (m.rows() != rows || m.cols() != d) {
            throw std::invalid_argument(std::string(name) + " has shape " + m.shape_string() +
                                        ", expected " + std::to_string(rows) + "x" +
                                        std::to_string(d));
        }
        if (!all_finite(m.data())) throw std::invalid_argument(std::string(name) + " is not finite");
    };
    for (const auto& w : model.layers) {
        check(w.w_q, d, "w_q");
        check(w.w_k, d, "w_k");
        check(w.w_v, d, "w_v");
        check(w.w_o, d, "w_o");
        check(w.w_ffn, d, "w_ffn");
    }
    check(model.w_h, model.config.vocab, "w_h");
}

void HeadCache::append(std::span<const double> key, std::span<const double> value,
                       std::size_t position) {
    if (!positions.empty() && position <= positions.back()) {
        throw std::invalid_argument("cache positions must be strictly increasing");
    }
    keys.append_row(key);
    values.append_row(value);
    positions.push_back(position);
    policy.append_tokens(1);
}

void HeadCache::retain(std::span<const std::size_t> indices) {
    keys.keep_rows(indices);
    values.keep_rows(indices);
    std::vector<std::size_t> kept;
    kept.reserve(indices.size());
    for (std::size_t i : indices) kept.push_back(positions.at(i));
    positions = std::move(kept);
    policy.retain(indices);
}

KvCache KvCache::empty(const ToyModel& model, Policy policy, PolicyParams params) {
    KvCache cache;
    cache.layers.resize(model.config.n_layers);
    for (auto& layer : cache.layers) {
        layer.heads.resize(model.config.n_heads);
        for (auto& head : layer.heads) head.policy = PolicyState(policy, params);
    }
    return cache;
}

std::size_t KvCache::max_head_size() const {
    std::size_t n = 0;
    for (const auto& layer : layers)
        for (const auto& head : layer.heads) n = std::max(n, head.size());
    return n;
}

namespace {

// Attention over the first `count` rows of keys/values.
AttendResult attend_prefix(std::span<const double> q, const Matrix& keys, const Matrix& values,
                           std::size_t count, bool scale_flag) {
    if (keys.cols() != q.size() || values.cols() != q.size()) {
        throw std::invalid_argument("attend: query of length " + std::to_string(q.size()) +
                                    " against keys " + keys.shape_string() + " and values " +
                                    values.shape_string());
    }
    if (keys.rows() != values.rows() || count == 0 || count > keys.rows()) {
        throw std::invalid_argument("attend: keys " + keys.shape_string() + " / values " +
                                    values.shape_string() + " with " + std::to_string(count) +
                                    " visible rows");
    }
    const double factor = scale_flag ? 1.0 / std::sqrt(static_cast<double>(q.size())) : 1.0;
    Vector logits(count);
    for (std::size_t i = 0; i < count; ++i) logits[i] = dot(q, keys.row(i)) * factor;
    Vector visible = softmax(logits);

    AttendResult res;
    res.output.assign(values.cols(), 0.0);
    for (std::size_t i = 0; i < count; ++i) {
        const auto v = values.row(i);
        for (std::size_t c = 0; c < v.size(); ++c) res.output[c] += visible[i] * v[c];
    }
    visible.resize(keys.rows(), 0.0);
    res.row.weights = std::move(visible);
    return res;
}

std::size_t visible_count(const HeadCache& head, std::size_t position) {
    return static_cast<std::size_t>(
        std::upper_bound(head.positions.begin(), head.positions.end(), position) -
        head.positions.begin());
}

std::span<const double> head_slice(std::span<const double> full, std::size_t head,
                                   std::size_t d_head) {
    return full.subspan(head * d_head, d_head);
}

// x + W_O a, then h + W_FFN h.
Vector layer_output(const LayerWeights& w, std::span<const double> x,
                    std::span<const double> attn) {
    Vector half = add(x, matvec(w.w_o, attn));
    return add(half, matvec(w.w_ffn, half));
}

}  // namespace

AttendResult attend_row(std::span<const double> q, const Matrix& keys, const Matrix& values,
                        bool scale_flag) {
    return attend_prefix(q, keys, values, keys.rows(), scale_flag);
}

std::optional<AttendResult> attend_causal(std::span<const double> q, const HeadCache& head,
                                          std::size_t position, bool scale_flag) {
    const std::size_t count = visible_count(head, position);
    if (count == 0) return std::nullopt;
    auto res = attend_prefix(q, head.keys, head.values, count, scale_flag);
    res.row.query_position = position;
    return res;
}

BlockOutput block_prefill(const ToyModel& model, const Matrix& hidden_block, KvCache& cache,
                          std::size_t start_position, const AttentionOptions& opts,
                          const LayerHook& hook) {
    const auto& cfg = model.config;
    if (hidden_block.cols() != cfg.d_model) {
        throw std::invalid_argument("hidden block width " + std::to_string(hidden_block.cols()) +
                                    " != d_model " + std::to_string(cfg.d_model));
    }
    if (hidden_block.rows() == 0) throw std::invalid_argument("empty hidden block");
    if (cache.layers.size() != cfg.n_layers) {
        throw std::invalid_argument("cache has " + std::to_string(cache.layers.size()) +
                                    " layers, model has " + std::to_string(cfg.n_layers));
    }

    const std::size_t m = hidden_block.rows();
    const std::size_t dh = model.d_head();
    BlockOutput out;
    Matrix x = hidden_block;

    for (std::size_t l = 0; l < cfg.n_layers; ++l) {
        const auto& w = model.layers[l];
        auto& layer = cache.layers[l];
        if (layer.heads.size() != cfg.n_heads) throw std::invalid_argument("cache head count mismatch");

        std::vector<Vector> queries(m);
        for (std::size_t i = 0; i < m; ++i) {
            queries[i] = matvec(w.w_q, x.row(i));
            const Vector k = matvec(w.w_k, x.row(i));
            const Vector v = matvec(w.w_v, x.row(i));
            for (std::size_t h = 0; h < cfg.n_heads; ++h) {
                layer.heads[h].append(head_slice(k, h, dh), head_slice(v, h, dh),
                                      start_position + i);
            }
        }

        Matrix attn(m, cfg.d_model);
        std::vector<std::vector<AttentionRow>> rows(cfg.n_heads);
        for (std::size_t h = 0; h < cfg.n_heads; ++h) {
            rows[h].reserve(m);
            for (std::size_t i = 0; i < m; ++i) {
                auto res = attend_causal(head_slice(queries[i], h, dh), layer.heads[h],
                                         start_position + i, opts.scale);
                std::copy(res->output.begin(), res->output.end(), attn.row(i).begin() + h * dh);
                rows[h].push_back(std::move(res->row));
            }
        }

        if (hook) {
            std::vector<std::size_t> before(cfg.n_heads);
            for (std::size_t h = 0; h < cfg.n_heads; ++h) before[h] = layer.heads[h].size();
            hook(l, layer, rows);
            for (std::size_t h = 0; h < cfg.n_heads; ++h) {
                if (layer.heads[h].size() == before[h]) continue;
                for (std::size_t i = 0; i < m; ++i) {
                    auto res = attend_causal(head_slice(queries[i], h, dh), layer.heads[h],
                                             start_position + i, opts.scale);
                    // A query whose visible slots were all evicted keeps its
                    // pre-eviction output.
                    if (!res) continue;
                    std::copy(res->output.begin(), res->output.end(),
                              attn.row(i).begin() + h * dh);
                }
            }
        }

        Matrix next(m, cfg.d_model);
        for (std::size_t i = 0; i < m; ++i) {
            const Vector y = layer_output(w, x.row(i), attn.row(i));
            std::copy(y.begin(), y.end(), next.row(i).begin());
        }
        out.attn_outputs.push_back(std::move(attn));
        x = std::move(next);
    }
    out.hidden = std::move(x);
    return out;
}

StepOutput generate_step(const ToyModel& model, std::span<const double> hidden, KvCache& cache,
                         std::size_t position, const AttentionOptions& opts,
                         const LayerHook& hook) {
    Matrix block(1, hidden.size(), Vector(hidden.begin(), hidden.end()));
    auto res = block_prefill(model, block, cache, position, opts, hook);
    StepOutput out;
    out.hidden.assign(res.hidden.row(0).begin(), res.hidden.row(0).end());
    out.logits = lm_logits(model, out.hidden);
    for (const auto& a : res.attn_outputs) out.attn_outputs.emplace_back(a.row(0).begin(), a.row(0).end());
    return out;
}

DenseOutput dense_forward(const ToyModel& model, const Matrix& hidden_all,
                          const AttentionOptions& opts) {
    const auto& cfg = model.config;
    if (hidden_all.cols() != cfg.d_model) {
        throw std::invalid_argument("hidden width " + std::to_string(hidden_all.cols()) +
                                    " != d_model " + std::to_string(cfg.d_model));
    }
    const std::size_t t = hidden_all.rows();
    const std::size_t dh = model.d_head();
    const double factor = opts.scale ? 1.0 / std::sqrt(static_cast<double>(dh)) : 1.0;

    DenseOutput out;
    Matrix x = hidden_all;
    for (const auto& w : model.layers) {
        const Matrix xt = transpose(x);
        const Matrix q = transpose(matmul(w.w_q, xt));  // t x d_model
        const Matrix k = transpose(matmul(w.w_k, xt));
        const Matrix v = transpose(matmul(w.w_v, xt));

        Matrix attn(t, cfg.d_model);
        for (std::size_t h = 0; h < cfg.n_heads; ++h) {
            const std::size_t off = h * dh;
            for (std::size_t i = 0; i < t; ++i) {
                Vector logits(i + 1);
                for (std::size_t j = 0; j <= i; ++j) {
                    double acc = 0.0;
                    for (std::size_t c = 0; c < dh; ++c) acc += q(i, off + c) * k(j, off + c);
                    logits[j] = acc * factor;
                }
                const Vector a = softmax(logits);
                for (std::size_t j = 0; j <= i; ++j)
                    for (std::size_t c = 0; c < dh; ++c) attn(i, off + c) += a[j] * v(j, off + c);
            }
        }

        Matrix next(t, cfg.d_model);
        for (std::size_t i = 0; i < t; ++i) {
            const Vector y = layer_output(w, x.row(i), attn.row(i));
            std::copy(y.begin(), y.end(), next.row(i).begin());
        }
        out.attn_outputs.push_back(std::move(attn));
        x = std::move(next);
    }
    out.hidden = std::move(x);
    return out;
}

Vector lm_logits(const ToyModel& model, std::span<const double> hidden) {
    return matvec(model.w_h, hidden);
}

}  // namespace kvevict
