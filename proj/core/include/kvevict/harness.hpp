#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "kvevict/attention.hpp"
#include "kvevict/caote.hpp"
#include "kvevict/engine.hpp"

namespace kvevict {

enum class OutputFormat { Csv, Json };

struct RunSpec {
    // Used when no weights file is given. The model seed of each run is
    // the run seed; a weights file fixes the model for every seed.
    ModelConfig model{};
    std::optional<std::filesystem::path> weights;

    // Template for every run; policy, caote mode, budget and block size are
    // taken from the lists below.
    EvictionConfig cfg{};
    std::vector<Policy> policies{Policy::H2O, Policy::TOVA, Policy::SnapKV};
    std::vector<CaoteMode> modes{CaoteMode::Off, CaoteMode::Full, CaoteMode::Fast};
    std::vector<std::size_t> budgets{64};
    std::vector<std::size_t> block_sizes{16};

    // Total tokens per run; the last n_generate are fed one at a time after
    // the prompt is prefilled. The needle experiment prefills all of them.
    std::size_t seq_len = 256;
    std::size_t n_generate = 32;
    std::vector<std::uint64_t> seeds = default_seeds();

    // Standard deviation of the filler hidden states.
    double hidden_scale = 1.0;

    // Needle experiment.
    std::vector<double> depths{0.1, 0.25, 0.5, 0.75, 0.9};
    // Needle norm relative to the expected filler norm.
    double needle_scale = 4.0;

    // Theorem suites.
    std::size_t trials = 1000;
    bool sabotage = false;

    OutputFormat format = OutputFormat::Csv;
    // When set, cmd_deviation writes per-run trace CSVs and decision JSONL.
    std::optional<std::filesystem::path> trace_dir;

    static std::vector<std::uint64_t> default_seeds();
};

void validate(const RunSpec& spec);

// Model for one seed: the weights file if given, otherwise init_model with
// the run seed.
ToyModel model_for_seed(const RunSpec& spec, std::uint64_t seed);

// rows x d_model hidden states, i.i.d. normal(0, scale), seeded
// independently of the model weights.
Matrix make_prompt(std::uint64_t seed, std::size_t rows, std::size_t d_model, double scale);

// ---------------------------------------------------------------- deviation

struct DeviationRow {
    Policy policy = Policy::H2O;
    CaoteMode mode = CaoteMode::Off;
    std::optional<std::size_t> layer;   // empty: aggregate over layers
    std::optional<std::uint64_t> seed;  // empty: aggregate over seeds
    double mean_nmse = 0.0;
    double mean_mse = 0.0;
};

struct DeviationReport {
    // Per-layer rows (policy-major, then mode, seed, layer), followed by one
    // aggregate row per (policy, mode).
    std::vector<DeviationRow> rows;
    std::size_t max_cache_after_eviction = 0;
    std::size_t budget = 0;

    double aggregate(Policy p, CaoteMode m) const;
};

DeviationReport cmd_deviation(const RunSpec& spec);

// `policy,caote_mode,layer,mean_nmse,seed`; aggregate rows use "all".
std::string deviation_csv(const DeviationReport& report);
// Same rows with the unnormalized mean squared error:
// `policy,caote_mode,layer,mean_mse,seed`.
std::string deviation_raw_csv(const DeviationReport& report);
std::string deviation_json(const DeviationReport& report);

// ------------------------------------------------------------------- needle

struct NeedleRun {
    Policy policy = Policy::H2O;
    CaoteMode mode = CaoteMode::Off;
    std::uint64_t seed = 0;
    double depth = 0.0;
    std::size_t position = 0;
    // [layer][head]
    std::vector<std::vector<bool>> survived;
    std::vector<std::vector<double>> attention_mass;
    double survival_rate = 0.0;
};

struct NeedleSummary {
    Policy policy = Policy::H2O;
    CaoteMode mode = CaoteMode::Off;
    double survival_rate = 0.0;
    double mean_attention_mass = 0.0;
};

struct NeedleReport {
    std::vector<NeedleRun> runs;
    std::vector<NeedleSummary> summary;
};

// Index of the needle for a depth fraction; throws when it falls outside
// the prompt.
std::size_t needle_position(double depth, std::size_t seq_len);

NeedleReport cmd_needle(const RunSpec& spec);
std::string needle_json(const NeedleReport& report);
// `policy,caote_mode,seed,depth,position,layer,head,survived,attention_mass`
std::string needle_csv(const NeedleReport& report);

// ----------------------------------------------------------------- theorems

struct TheoremCheck {
    std::string name;
    std::size_t trials = 0;
    double max_error = 0.0;
    double tolerance = 0.0;
    bool passed = true;
};

struct TheoremReport {
    std::vector<TheoremCheck> checks;
    bool vacuous = false;

    bool all_passed() const;
};

// Renormalized weights after evicting one token vs softmax over the
// surviving logits. max_error is the larger of the max relative entry
// error and the max |sum - 1|.
TheoremCheck check_renormalization(std::size_t trials, std::uint64_t seed, double tolerance);
// CAOTE score vs brute-force eviction error, relative.
TheoremCheck check_caote_equals_eviction_error(std::size_t trials, std::uint64_t seed,
                                               double tolerance, bool sabotage = false);
// |sum of H2O scores - n| after one causal pass over n tokens.
TheoremCheck check_h2o_score_mass(std::size_t trials, std::uint64_t seed, double tolerance);
// ||observed - predicted|| / ||observed|| for single-layer logit deltas.
TheoremCheck check_logit_identity(std::size_t trials, std::uint64_t seed, double tolerance,
                                  bool zero_ffn);

TheoremReport cmd_theorems(const RunSpec& spec);
std::string theorems_text(const TheoremReport& report);
std::string theorems_json(const TheoremReport& report);
std::string theorems_csv(const TheoremReport& report);

// -------------------------------------------------------------------- sweep

struct SweepRow {
    Policy policy = Policy::H2O;
    CaoteMode mode = CaoteMode::Off;
    std::size_t budget = 0;
    std::size_t block_size = 0;
    double mean_nmse = 0.0;
};

struct SweepReport {
    std::vector<SweepRow> rows;
    // One line per (policy, mode, block size): whether nmse is
    // non-increasing in the budget.
    std::vector<std::string> monotonicity;
    std::size_t max_cache_after_eviction = 0;
    // Largest number of tokens any single pass evicted from one head.
    std::size_t max_evicted_per_pass = 0;
};

SweepReport cmd_sweep(const RunSpec& spec);
// `policy,caote_mode,budget,block_size,mean_nmse`
std::string sweep_csv(const SweepReport& report);
std::string sweep_json(const SweepReport& report);

}  // namespace kvevict
