#include "kvevict/harness.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>

#include <fmt/format.h>

#include "json.hpp"
#include "kvevict/model_io.hpp"

namespace kvevict {

using nlohmann::json;

std::vector<std::uint64_t> RunSpec::default_seeds() {
    std::vector<std::uint64_t> s(20);
    std::iota(s.begin(), s.end(), std::uint64_t{1});
    return s;
}

void validate(const RunSpec& spec) {
    if (spec.seeds.empty()) throw std::invalid_argument("at least one seed is required");
    if (spec.seq_len == 0) throw std::invalid_argument("seq_len must be >= 1");
    if (spec.n_generate >= spec.seq_len) {
        throw std::invalid_argument("n_generate must leave at least one prompt token of seq_len");
    }
    if (spec.policies.empty() || spec.modes.empty()) {
        throw std::invalid_argument("at least one policy and one caote mode are required");
    }
    if (spec.budgets.empty() || spec.block_sizes.empty()) {
        throw std::invalid_argument("at least one budget and one block size are required");
    }
    if (!spec.weights) validate_config(spec.model);
    if (!(spec.hidden_scale > 0.0)) throw std::invalid_argument("hidden scale must be positive");
    EvictionConfig probe = spec.cfg;
    for (std::size_t b : spec.budgets) {
        probe.budget = b;
        for (std::size_t m : spec.block_sizes) {
            probe.block_size = m;
            validate(probe);
        }
    }
}

ToyModel model_for_seed(const RunSpec& spec, std::uint64_t seed) {
    if (spec.weights) return load_model(*spec.weights);
    ModelConfig c = spec.model;
    c.seed = seed;
    return init_model(c);
}

Matrix make_prompt(std::uint64_t seed, std::size_t rows, std::size_t d_model, double scale) {
    // Offset keeps prompt draws independent of the weight stream for the
    // same seed.
    std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
    std::normal_distribution<double> dist(0.0, scale);
    Matrix m(rows, d_model);
    for (double& x : m.data()) x = dist(rng);
    return m;
}

namespace {

EvictionConfig run_config(const RunSpec& spec, Policy p, CaoteMode mode, std::size_t budget,
                          std::size_t block) {
    EvictionConfig cfg = spec.cfg;
    cfg.policy = p;
    cfg.caote_mode = mode;
    cfg.budget = budget;
    cfg.block_size = block;
    return cfg;
}

std::string num(double x) { return fmt::format("{}", x); }

void write_file(const std::filesystem::path& path, const std::string& content) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    out << content;
    if (!out) throw std::runtime_error("failed writing " + path.string());
}

struct PairAggregate {
    double nmse_sum = 0.0;
    double mse_sum = 0.0;
    std::size_t count = 0;
};

// Runs every (policy, mode) pair over every seed at one budget/block size.
// Emits per-layer rows into `rows` (if non-null) and returns the aggregate
// per pair in policy-major order.
std::vector<PairAggregate> deviation_grid(const RunSpec& spec, std::size_t budget,
                                          std::size_t block, std::vector<DeviationRow>* rows,
                                          std::size_t& max_cache, std::size_t& max_evicted) {
    const std::size_t n_pairs = spec.policies.size() * spec.modes.size();
    std::vector<PairAggregate> agg(n_pairs);
    std::vector<std::vector<DeviationRow>> per_pair(n_pairs);
    const std::size_t total = spec.seq_len;

    for (std::uint64_t seed : spec.seeds) {
        const ToyModel model = model_for_seed(spec, seed);
        const Matrix hidden = make_prompt(seed, total, model.config.d_model, spec.hidden_scale);
        const DenseOutput dense = dense_forward(model, hidden, spec.cfg.attention);
        const std::size_t n_layers = model.config.n_layers;

        std::size_t pair = 0;
        for (Policy p : spec.policies) {
            for (CaoteMode mode : spec.modes) {
                const EvictionConfig cfg = run_config(spec, p, mode, budget, block);
                const SequenceResult res = run_sequence(model, hidden, spec.n_generate, cfg, &dense);
                max_cache = std::max(max_cache, res.max_cache_after_eviction);
                for (const auto& d : res.decisions) max_evicted = std::max(max_evicted, d.evicted.size());

                const auto nmse = mean_nmse_per_layer(res.trace, n_layers);
                const auto mse = mean_mse_per_layer(res.trace, n_layers);
                for (std::size_t l = 0; l < n_layers; ++l) {
                    per_pair[pair].push_back({p, mode, l, seed, nmse[l], mse[l]});
                    agg[pair].nmse_sum += nmse[l];
                    agg[pair].mse_sum += mse[l];
                    ++agg[pair].count;
                }

                if (spec.trace_dir && rows != nullptr) {
                    const auto stem = fmt::format("{}_{}_seed{}", to_string(p), to_string(mode), seed);
                    std::ostringstream trace_csv;
                    write_trace_csv(trace_csv, res.trace);
                    write_file(*spec.trace_dir / ("trace_" + stem + ".csv"), trace_csv.str());
                    std::ostringstream jsonl;
                    write_decisions_jsonl(jsonl, res.decisions);
                    write_file(*spec.trace_dir / ("decisions_" + stem + ".jsonl"), jsonl.str());
                }
                ++pair;
            }
        }
    }
    if (rows != nullptr) {
        for (auto& group : per_pair)
            for (auto& r : group) rows->push_back(r);
    }
    return agg;
}

}  // namespace

double DeviationReport::aggregate(Policy p, CaoteMode m) const {
    for (const auto& r : rows) {
        if (r.policy == p && r.mode == m && !r.layer && !r.seed) return r.mean_nmse;
    }
    throw std::out_of_range(fmt::format("no aggregate row for {}/{}", to_string(p), to_string(m)));
}

DeviationReport cmd_deviation(const RunSpec& spec) {
    validate(spec);
    if (spec.budgets.size() != 1 || spec.block_sizes.size() != 1) {
        throw std::invalid_argument("deviation takes exactly one budget and one block size");
    }
    if (spec.trace_dir) std::filesystem::create_directories(*spec.trace_dir);

    DeviationReport report;
    report.budget = spec.budgets.front();
    std::size_t max_evicted = 0;
    const auto agg = deviation_grid(spec, spec.budgets.front(), spec.block_sizes.front(),
                                    &report.rows, report.max_cache_after_eviction, max_evicted);
    std::size_t pair = 0;
    for (Policy p : spec.policies) {
        for (CaoteMode mode : spec.modes) {
            const auto& a = agg[pair++];
            const double n = static_cast<double>(std::max<std::size_t>(a.count, 1));
            report.rows.push_back({p, mode, std::nullopt, std::nullopt, a.nmse_sum / n, a.mse_sum / n});
        }
    }
    return report;
}

namespace {

template <class T>
std::string opt_field(const std::optional<T>& v) {
    return v ? std::to_string(*v) : std::string("all");
}

std::string deviation_table(const DeviationReport& report, bool raw) {
    std::string out = raw ? "policy,caote_mode,layer,mean_mse,seed\n"
                          : "policy,caote_mode,layer,mean_nmse,seed\n";
    for (const auto& r : report.rows) {
        out += fmt::format("{},{},{},{},{}\n", to_string(r.policy), to_string(r.mode),
                           opt_field(r.layer), num(raw ? r.mean_mse : r.mean_nmse),
                           opt_field(r.seed));
    }
    return out;
}

}  // namespace

std::string deviation_csv(const DeviationReport& report) { return deviation_table(report, false); }
std::string deviation_raw_csv(const DeviationReport& report) { return deviation_table(report, true); }

std::string deviation_json(const DeviationReport& report) {
    json rows = json::array();
    for (const auto& r : report.rows) {
        json j;
        j["policy"] = to_string(r.policy);
        j["caote_mode"] = to_string(r.mode);
        j["layer"] = r.layer ? json(*r.layer) : json("all");
        j["seed"] = r.seed ? json(*r.seed) : json("all");
        j["mean_nmse"] = r.mean_nmse;
        j["mean_mse"] = r.mean_mse;
        rows.push_back(std::move(j));
    }
    return json{{"experiment", "deviation"}, {"budget", report.budget}, {"rows", rows}}.dump(2) + "\n";
}

// ------------------------------------------------------------------- needle

std::size_t needle_position(double depth, std::size_t seq_len) {
    if (!(depth >= 0.0)) throw std::invalid_argument("needle depth must be >= 0");
    const auto pos = static_cast<std::size_t>(std::floor(depth * static_cast<double>(seq_len)));
    if (pos >= seq_len) {
        throw std::invalid_argument(fmt::format("needle depth {} lands at token {} of a {}-token prompt",
                                                depth, pos, seq_len));
    }
    return pos;
}

NeedleReport cmd_needle(const RunSpec& spec) {
    validate(spec);
    if (spec.budgets.size() != 1 || spec.block_sizes.size() != 1) {
        throw std::invalid_argument("needle takes exactly one budget and one block size");
    }
    if (spec.depths.empty()) throw std::invalid_argument("at least one needle depth is required");
    std::vector<std::size_t> positions;
    for (double d : spec.depths) positions.push_back(needle_position(d, spec.seq_len));

    NeedleReport report;
    for (Policy p : spec.policies) {
        for (CaoteMode mode : spec.modes) {
            NeedleSummary summary{p, mode, 0.0, 0.0};
            std::size_t slots = 0;
            std::size_t survived_slots = 0;
            double mass = 0.0;
            const EvictionConfig cfg =
                run_config(spec, p, mode, spec.budgets.front(), spec.block_sizes.front());
            for (std::uint64_t seed : spec.seeds) {
                const ToyModel model = model_for_seed(spec, seed);
                const std::size_t d = model.config.d_model;
                Matrix base = make_prompt(seed, spec.seq_len, d, spec.hidden_scale);

                // Needle: a random unit direction scaled to needle_scale times
                // the expected filler norm.
                std::mt19937_64 rng(seed ^ 0x5deece66dULL);
                std::normal_distribution<double> dist(0.0, 1.0);
                Vector needle(d);
                for (double& x : needle) x = dist(rng);
                const double target = spec.needle_scale * spec.hidden_scale * std::sqrt(static_cast<double>(d));
                needle = scaled(needle, target / l2_norm(needle));

                for (std::size_t k = 0; k < positions.size(); ++k) {
                    Matrix prompt = base;
                    std::copy(needle.begin(), needle.end(), prompt.row(positions[k]).begin());
                    const SequenceResult res = run_sequence(model, prompt, 0, cfg);

                    NeedleRun run;
                    run.policy = p;
                    run.mode = mode;
                    run.seed = seed;
                    run.depth = spec.depths[k];
                    run.position = positions[k];
                    std::size_t alive = 0;
                    std::size_t count = 0;
                    for (std::size_t l = 0; l < res.final_cache.layers.size(); ++l) {
                        const auto& heads = res.final_cache.layers[l].heads;
                        run.survived.emplace_back();
                        run.attention_mass.emplace_back();
                        for (std::size_t h = 0; h < heads.size(); ++h) {
                            const auto& pos = heads[h].positions;
                            const auto it = std::find(pos.begin(), pos.end(), positions[k]);
                            const bool ok = it != pos.end();
                            double m = 0.0;
                            if (ok) {
                                const auto idx = static_cast<std::size_t>(it - pos.begin());
                                m = res.last_query_rows[l][h].weights.at(idx);
                            }
                            run.survived.back().push_back(ok);
                            run.attention_mass.back().push_back(m);
                            alive += ok ? 1 : 0;
                            ++count;
                            mass += m;
                        }
                    }
                    run.survival_rate = static_cast<double>(alive) / static_cast<double>(count);
                    slots += count;
                    survived_slots += alive;
                    report.runs.push_back(std::move(run));
                }
            }
            summary.survival_rate = static_cast<double>(survived_slots) / static_cast<double>(slots);
            summary.mean_attention_mass = mass / static_cast<double>(slots);
            report.summary.push_back(summary);
        }
    }
    return report;
}

std::string needle_json(const NeedleReport& report) {
    json runs = json::array();
    for (const auto& r : report.runs) {
        runs.push_back({{"policy", to_string(r.policy)},
                        {"caote_mode", to_string(r.mode)},
                        {"seed", r.seed},
                        {"depth", r.depth},
                        {"position", r.position},
                        {"survived", r.survived},
                        {"attention_mass", r.attention_mass},
                        {"survival_rate", r.survival_rate}});
    }
    json summary = json::array();
    for (const auto& s : report.summary) {
        summary.push_back({{"policy", to_string(s.policy)},
                           {"caote_mode", to_string(s.mode)},
                           {"survival_rate", s.survival_rate},
                           {"mean_attention_mass", s.mean_attention_mass}});
    }
    return json{{"experiment", "needle"}, {"summary", summary}, {"runs", runs}}.dump(2) + "\n";
}

std::string needle_csv(const NeedleReport& report) {
    std::string out = "policy,caote_mode,seed,depth,position,layer,head,survived,attention_mass\n";
    for (const auto& r : report.runs) {
        for (std::size_t l = 0; l < r.survived.size(); ++l) {
            for (std::size_t h = 0; h < r.survived[l].size(); ++h) {
                out += fmt::format("{},{},{},{},{},{},{},{},{}\n", to_string(r.policy),
                                   to_string(r.mode), r.seed, num(r.depth), r.position, l, h,
                                   r.survived[l][h] ? 1 : 0, num(r.attention_mass[l][h]));
            }
        }
    }
    return out;
}

// ----------------------------------------------------------------- theorems

namespace {

std::size_t uniform_index(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

Vector random_logits(std::mt19937_64& rng, std::size_t n, double spread) {
    std::uniform_real_distribution<double> dist(-spread, spread);
    Vector v(n);
    for (double& x : v) x = dist(rng);
    return v;
}

double relative_error(double got, double want) {
    const double diff = std::abs(got - want);
    if (diff == 0.0) return 0.0;
    return diff / std::max(std::abs(got), std::abs(want));
}

TheoremCheck finish(std::string name, std::size_t trials, double max_error, double tolerance) {
    return {std::move(name), trials, max_error, tolerance, !(max_error > tolerance)};
}

}  // namespace

TheoremCheck check_renormalization(std::size_t trials, std::uint64_t seed, double tolerance) {
    std::mt19937_64 rng(seed);
    double worst = 0.0;
    for (std::size_t t = 0; t < trials; ++t) {
        const std::size_t n = uniform_index(rng, 2, 64);
        const Vector logits = random_logits(rng, n, 4.0);
        const std::size_t j = uniform_index(rng, 0, n - 1);
        const ScoreVector alpha{softmax(logits), true};
        const ScoreVector renorm = renormalize_after_eviction(alpha, j);

        Vector surviving = logits;
        surviving.erase(surviving.begin() + static_cast<std::ptrdiff_t>(j));
        const Vector expected = softmax(surviving);
        double sum = 0.0;
        for (std::size_t i = 0; i < expected.size(); ++i) {
            worst = std::max(worst, relative_error(renorm.scores[i], expected[i]));
            sum += renorm.scores[i];
        }
        worst = std::max(worst, std::abs(sum - 1.0));
    }
    return finish("renormalization", trials, worst, tolerance);
}

TheoremCheck check_caote_equals_eviction_error(std::size_t trials, std::uint64_t seed,
                                               double tolerance, bool sabotage) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    // Logit spread bounded so the smallest weights stay above ~1e-5: the
    // brute-force oracle subtracts two O(1) outputs, so its own rounding
    // error grows like eps / alpha_j.
    std::uniform_real_distribution<double> spread(0.1, 3.0);
    double worst = 0.0;
    for (std::size_t t = 0; t < trials; ++t) {
        const std::size_t n = uniform_index(rng, 2, 64);
        const std::size_t d = uniform_index(rng, 1, 32);
        const Vector logits = random_logits(rng, n, spread(rng));
        Matrix values(n, d);
        for (double& x : values.data()) x = normal(rng);
        const CaoteInput in{{softmax(logits), true}, values};

        Vector c;
        if (sabotage) {
            // Sign flip inside the norm: ||X + v_j|| instead of ||X - v_j||.
            const Vector x = weighted_row_sum(in.alpha.scores, values);
            for (std::size_t j = 0; j < n; ++j) {
                const double a = in.alpha.scores[j];
                c.push_back(a / (1.0 - a) * l2_norm(add(x, values.row(j))));
            }
        } else {
            c = caote_scores(in).c;
        }
        for (std::size_t j = 0; j < n; ++j) {
            if (in.alpha.scores[j] >= 1.0 - kSoleHolderMargin) continue;
            worst = std::max(worst, relative_error(c[j], eviction_error_oracle(in, j)));
        }
    }
    return finish(sabotage ? "caote_equals_eviction_error[sabotaged]" : "caote_equals_eviction_error",
                  trials, worst, tolerance);
}

TheoremCheck check_h2o_score_mass(std::size_t trials, std::uint64_t seed, double tolerance) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> spread(0.1, 6.0);
    double worst = 0.0;
    for (std::size_t t = 0; t < trials; ++t) {
        const std::size_t n = uniform_index(rng, 1, 128);
        const double s = spread(rng);
        PolicyState state(Policy::H2O, {});
        std::vector<AttentionRow> rows;
        for (std::size_t i = 0; i < n; ++i) {
            AttentionRow r{softmax(random_logits(rng, i + 1, s)), i};
            rows.push_back(std::move(r));
        }
        accumulate_rows(state, rows);
        const auto h = score_h2o(state).scores;
        double total = 0.0;
        for (double x : h) total += x;
        worst = std::max(worst, std::abs(total - static_cast<double>(n)));
    }
    return finish("h2o_score_mass", trials, worst, tolerance);
}

TheoremCheck check_logit_identity(std::size_t trials, std::uint64_t seed, double tolerance,
                                  bool zero_ffn) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    double worst = 0.0;
    for (std::size_t t = 0; t < trials; ++t) {
        ModelConfig c;
        c.n_layers = 1;
        c.n_heads = uniform_index(rng, 1, 4);
        c.d_model = c.n_heads * uniform_index(rng, 1, 8);
        c.vocab = uniform_index(rng, 4, 32);
        c.seed = rng();
        ToyModel model = init_model(c);
        if (zero_ffn) model.layers[0].w_ffn = Matrix(c.d_model, c.d_model);

        const std::size_t n = uniform_index(rng, 2, 24);
        Matrix hidden(n, c.d_model);
        for (double& x : hidden.data()) x = normal(rng);
        const std::size_t j = uniform_index(rng, 0, n - 1);

        const LogitErrorCheck res = logit_error_check(model, hidden, j);
        const double ref = l2_norm(res.observed);
        const double diff = l2_norm(subtract(res.observed, res.predicted));
        const double err = ref == 0.0 ? diff : diff / ref;
        worst = std::max(worst, err);
    }
    return finish(zero_ffn ? "logit_identity_attention_only" : "logit_identity_with_ffn", trials,
                  worst, tolerance);
}

bool TheoremReport::all_passed() const {
    return std::all_of(checks.begin(), checks.end(), [](const auto& c) { return c.passed; });
}

TheoremReport cmd_theorems(const RunSpec& spec) {
    constexpr double kTolerance = 1e-9;
    const std::uint64_t seed = spec.seeds.empty() ? 1 : spec.seeds.front();
    TheoremReport report;
    report.vacuous = spec.trials == 0;
    report.checks.push_back(check_renormalization(spec.trials, seed, kTolerance));
    report.checks.push_back(
        check_caote_equals_eviction_error(spec.trials, seed + 1, kTolerance, spec.sabotage));
    report.checks.push_back(check_h2o_score_mass(spec.trials, seed + 2, kTolerance));
    report.checks.push_back(check_logit_identity(spec.trials, seed + 3, kTolerance, false));
    report.checks.push_back(check_logit_identity(spec.trials, seed + 4, kTolerance, true));
    return report;
}

std::string theorems_text(const TheoremReport& report) {
    std::string out;
    if (report.vacuous) out += "warning: 0 trials requested; every check passes vacuously\n";
    for (const auto& c : report.checks) {
        out += fmt::format("[{}] {:<40} trials={:<6} max_error={:.3e} tol={:.0e}\n",
                           c.passed ? "PASS" : "FAIL", c.name, c.trials, c.max_error, c.tolerance);
    }
    out += report.all_passed() ? "all theorem checks passed\n" : "theorem checks FAILED\n";
    return out;
}

std::string theorems_json(const TheoremReport& report) {
    json checks = json::array();
    for (const auto& c : report.checks) {
        checks.push_back({{"name", c.name},
                          {"trials", c.trials},
                          {"max_error", c.max_error},
                          {"tolerance", c.tolerance},
                          {"passed", c.passed}});
    }
    return json{{"experiment", "theorems"},
                {"vacuous", report.vacuous},
                {"passed", report.all_passed()},
                {"checks", checks}}
               .dump(2) +
           "\n";
}

std::string theorems_csv(const TheoremReport& report) {
    std::string out = "name,trials,max_error,tolerance,passed\n";
    for (const auto& c : report.checks) {
        out += fmt::format("{},{},{},{},{}\n", c.name, c.trials, num(c.max_error), num(c.tolerance),
                           c.passed ? 1 : 0);
    }
    return out;
}

// -------------------------------------------------------------------- sweep

SweepReport cmd_sweep(const RunSpec& spec) {
    validate(spec);
    SweepReport report;
    // [pair][block][budget]
    const std::size_t n_pairs = spec.policies.size() * spec.modes.size();
    std::vector<std::vector<std::vector<double>>> table(
        n_pairs, std::vector<std::vector<double>>(spec.block_sizes.size(),
                                                  std::vector<double>(spec.budgets.size())));
    for (std::size_t bi = 0; bi < spec.budgets.size(); ++bi) {
        for (std::size_t mi = 0; mi < spec.block_sizes.size(); ++mi) {
            const auto agg = deviation_grid(spec, spec.budgets[bi], spec.block_sizes[mi], nullptr,
                                            report.max_cache_after_eviction,
                                            report.max_evicted_per_pass);
            for (std::size_t p = 0; p < n_pairs; ++p) {
                const double n = static_cast<double>(std::max<std::size_t>(agg[p].count, 1));
                table[p][mi][bi] = agg[p].nmse_sum / n;
            }
        }
    }

    std::size_t pair = 0;
    for (Policy p : spec.policies) {
        for (CaoteMode mode : spec.modes) {
            for (std::size_t bi = 0; bi < spec.budgets.size(); ++bi)
                for (std::size_t mi = 0; mi < spec.block_sizes.size(); ++mi)
                    report.rows.push_back({p, mode, spec.budgets[bi], spec.block_sizes[mi],
                                           table[pair][mi][bi]});
            for (std::size_t mi = 0; mi < spec.block_sizes.size(); ++mi) {
                std::vector<std::size_t> order(spec.budgets.size());
                std::iota(order.begin(), order.end(), 0);
                std::sort(order.begin(), order.end(),
                          [&](std::size_t a, std::size_t b) { return spec.budgets[a] < spec.budgets[b]; });
                bool monotone = true;
                for (std::size_t k = 1; k < order.size(); ++k)
                    if (table[pair][mi][order[k]] > table[pair][mi][order[k - 1]]) monotone = false;
                report.monotonicity.push_back(
                    fmt::format("{},{},block={}: nmse {} as budget grows", to_string(p),
                                to_string(mode), spec.block_sizes[mi],
                                monotone ? "non-increasing" : "NOT monotone"));
            }
            ++pair;
        }
    }
    return report;
}

std::string sweep_csv(const SweepReport& report) {
    std::string out = "policy,caote_mode,budget,block_size,mean_nmse\n";
    for (const auto& r : report.rows) {
        out += fmt::format("{},{},{},{},{}\n", to_string(r.policy), to_string(r.mode), r.budget,
                           r.block_size, num(r.mean_nmse));
    }
    return out;
}

std::string sweep_json(const SweepReport& report) {
    json rows = json::array();
    for (const auto& r : report.rows) {
        rows.push_back({{"policy", to_string(r.policy)},
                        {"caote_mode", to_string(r.mode)},
                        {"budget", r.budget},
                        {"block_size", r.block_size},
                        {"mean_nmse", r.mean_nmse}});
    }
    return json{{"experiment", "sweep"}, {"rows", rows}, {"monotonicity", report.monotonicity}}.dump(2) +
           "\n";
}

}  // namespace kvevict
