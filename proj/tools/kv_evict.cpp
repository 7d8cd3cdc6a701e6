// kv-evict: desk-scale KV-cache eviction experiments.
//
//   kv-evict deviation  per-layer attention-output NMSE vs the dense model
//   kv-evict needle     survival of a planted needle token after prefill
//   kv-evict theorems   randomized identity checks (exit 1 on failure)
//   kv-evict sweep      budget x block-size grid of deviation aggregates
//
// Exit codes: 0 success, 1 theorem failure or runtime error, 2 usage error.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "kvevict/harness.hpp"
#include "kvevict/model_io.hpp"

namespace {

constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;

struct Options {
    std::string command;
    std::vector<std::string> policies;
    std::vector<std::string> modes;
    std::vector<std::size_t> budgets;
    std::vector<std::size_t> blocks;
    std::vector<std::uint64_t> seeds;
    std::vector<double> depths;
    std::string aggregate = "per-head";
    std::string format;
    std::string out;
    std::string weights;
    std::string save_weights;
    std::string trace_dir;
    bool no_scale = false;
};

void emit(const std::string& path, const std::string& content) {
    if (path.empty()) {
        std::cout << content;
        return;
    }
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot open " + path + " for writing");
    f << content;
    if (!f) throw std::runtime_error("failed writing " + path);
}

// Sidecar next to --out for the unnormalized deviation numbers.
std::string raw_path(const std::string& out) {
    if (out.empty()) return {};
    return out + ".mse.csv";
}

int run(const Options& o, kvevict::RunSpec spec) {
    using namespace kvevict;
    const bool json = spec.format == OutputFormat::Json;

    if (o.command == "deviation") {
        const auto report = cmd_deviation(spec);
        emit(o.out, json ? deviation_json(report) : deviation_csv(report));
        if (!json && !o.out.empty()) emit(raw_path(o.out), deviation_raw_csv(report));
        return 0;
    }
    if (o.command == "needle") {
        const auto report = cmd_needle(spec);
        emit(o.out, json ? needle_json(report) : needle_csv(report));
        if (!o.out.empty()) {
            for (const auto& s : report.summary) {
                std::cout << to_string(s.policy) << "," << to_string(s.mode)
                          << " survival_rate=" << s.survival_rate
                          << " mean_attention_mass=" << s.mean_attention_mass << "\n";
            }
        }
        return 0;
    }
    if (o.command == "theorems") {
        const auto report = cmd_theorems(spec);
        const std::string text = theorems_text(report);
        if (report.vacuous) std::cerr << "warning: --trials 0 makes every check vacuous\n";
        std::cout << text;
        if (!o.out.empty()) emit(o.out, json ? theorems_json(report) : theorems_csv(report));
        return report.all_passed() ? 0 : kExitFailure;
    }
    if (o.command == "sweep") {
        const auto report = cmd_sweep(spec);
        emit(o.out, json ? sweep_json(report) : sweep_csv(report));
        auto& notes = o.out.empty() ? std::cerr : std::cout;
        for (const auto& line : report.monotonicity) notes << line << "\n";
        return 0;
    }
    throw std::invalid_argument("unknown command " + o.command);
}

}  // namespace

int main(int argc, char** argv) {
    using namespace kvevict;

    CLI::App app{"KV-cache eviction experiments (H2O/TOVA/SnapKV/Sink with CAOTE)", "kv-evict"};
    app.set_version_flag("--version", "kv-evict 0.1.0");

    Options o;
    RunSpec spec;
    std::size_t snap_window = spec.cfg.params.window;
    std::size_t pool_kernel = spec.cfg.params.pool_kernel;
    std::size_t sink_count = spec.cfg.params.sink_count;
    std::size_t recent_window = 0;

    app.add_option("command", o.command, "deviation | needle | theorems | sweep")
        ->required()
        ->check(CLI::IsMember({"deviation", "needle", "theorems", "sweep"}));
    app.add_option("--policy", o.policies, "Base policies: h2o,tova,snapkv,sink")
        ->delimiter(',')
        ->check(CLI::IsMember({"h2o", "tova", "snapkv", "sink"}));
    app.add_option("--caote", o.modes, "CAOTE modes: off,full,fast")
        ->delimiter(',')
        ->check(CLI::IsMember({"off", "full", "fast"}));
    app.add_option("--budget", o.budgets, "Cache budget b (list for sweep)")
        ->delimiter(',')
        ->check(CLI::PositiveNumber);
    app.add_option("--block", o.blocks, "Prefill block size m (list for sweep)")
        ->delimiter(',')
        ->check(CLI::PositiveNumber);
    app.add_option("--seq-len", spec.seq_len, "Total tokens per run (prompt + generated)")->check(CLI::PositiveNumber);
    app.add_option("--generate", spec.n_generate, "Tokens of seq-len fed one at a time after prefill");
    app.add_option("--layers", spec.model.n_layers, "Model layers")->check(CLI::PositiveNumber);
    app.add_option("--heads", spec.model.n_heads, "Attention heads")->check(CLI::PositiveNumber);
    app.add_option("--d-model", spec.model.d_model, "Hidden width")->check(CLI::PositiveNumber);
    app.add_option("--vocab", spec.model.vocab, "Vocabulary size")->check(CLI::PositiveNumber);
    app.add_option("--seeds", o.seeds, "Comma-separated seeds")->delimiter(',');
    app.add_option("--weights", o.weights, "Load model weights from JSON")->check(CLI::ExistingFile);
    app.add_option("--save-weights", o.save_weights,
                   "Write the model of the first seed as JSON and continue");
    app.add_option("--aggregate", o.aggregate, "Head aggregation")
        ->check(CLI::IsMember({"per-head", "mean-heads"}));
    app.add_option("--protect-recent", spec.cfg.protect_recent,
                   "Never evict the N most recent candidates");
    app.add_flag("--no-scale", o.no_scale, "Disable 1/sqrt(d_head) logit scaling");
    app.add_option("--out", o.out, "Output file (stdout when omitted)");
    app.add_option("--format", o.format, "csv | json")->check(CLI::IsMember({"csv", "json"}));
    app.add_option("--trials", spec.trials, "Trials per theorem check");
    app.add_flag("--sabotage", spec.sabotage, "Inject a sign error into the CAOTE check");
    app.add_option("--depths", o.depths, "Needle depths as fractions of the prompt")->delimiter(',');
    app.add_option("--needle-scale", spec.needle_scale, "Needle norm relative to filler norm");
    app.add_option("--hidden-scale", spec.hidden_scale, "Std-dev of random hidden states");
    app.add_option("--sink-count", sink_count, "Sink policy: initial tokens kept");
    app.add_option("--recent-window", recent_window,
                   "Sink policy: recent tokens kept (0 = budget - sink count)");
    app.add_option("--snap-window", snap_window, "SnapKV observation window")
        ->check(CLI::PositiveNumber);
    app.add_option("--pool-kernel", pool_kernel, "SnapKV max-pool kernel (odd)")
        ->check(CLI::PositiveNumber);
    app.add_option("--trace-dir", o.trace_dir,
                   "deviation: write per-run trace CSV and decision JSONL here");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    try {
        if (!o.policies.empty()) {
            spec.policies.clear();
            for (const auto& p : o.policies) spec.policies.push_back(parse_policy(p));
        }
        if (!o.modes.empty()) {
            spec.modes.clear();
            for (const auto& m : o.modes) spec.modes.push_back(parse_caote_mode(m));
        }
        if (o.command == "sweep") {
            spec.budgets = o.budgets.empty() ? std::vector<std::size_t>{16, 32, 64, 128} : o.budgets;
            spec.block_sizes = o.blocks.empty() ? std::vector<std::size_t>{4, 16, 64} : o.blocks;
        } else {
            if (o.budgets.size() > 1 || o.blocks.size() > 1) {
                throw std::invalid_argument("--budget/--block take a list only for sweep");
            }
            if (!o.budgets.empty()) spec.budgets = o.budgets;
            if (!o.blocks.empty()) spec.block_sizes = o.blocks;
        }
        if (!o.seeds.empty()) spec.seeds = o.seeds;
        if (!o.depths.empty()) spec.depths = o.depths;
        if (!o.weights.empty()) spec.weights = o.weights;
        if (!o.trace_dir.empty()) spec.trace_dir = o.trace_dir;
        spec.cfg.aggregate = parse_aggregation(o.aggregate);
        spec.cfg.attention.scale = !o.no_scale;
        spec.cfg.params.window = snap_window;
        spec.cfg.params.pool_kernel = pool_kernel;
        spec.cfg.params.sink_count = sink_count;
        spec.cfg.params.recent_window = recent_window;
        const std::string fmt_name =
            o.format.empty() ? (o.command == "needle" ? "json" : "csv") : o.format;
        spec.format = fmt_name == "json" ? OutputFormat::Json : OutputFormat::Csv;
        if (o.command != "theorems") validate(spec);

        if (!o.save_weights.empty()) {
            save_model(model_for_seed(spec, spec.seeds.front()), o.save_weights);
        }
    } catch (const std::invalid_argument& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitFailure;
    }

    try {
        return run(o, spec);
    } catch (const std::invalid_argument& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitFailure;
    }
}
