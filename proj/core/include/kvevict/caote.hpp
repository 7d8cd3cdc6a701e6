#pragma once

#include <cstddef>
#include <limits>
#include <string_view>

#include "kvevict/attention.hpp"
#include "kvevict/numerics.hpp"
#include "kvevict/scoring.hpp"

namespace kvevict {

enum class CaoteMode { Off, Full, Fast };

std::string_view to_string(CaoteMode mode);
CaoteMode parse_caote_mode(std::string_view name);

// Attention weights of one query over n cached tokens and their values
// (n x d_head). alpha must lie on the simplex.
struct CaoteInput {
    ScoreVector alpha;
    Matrix values;
};

struct CaoteScores {
    Vector c;
    CaoteMode mode = CaoteMode::Full;
};

// A token holding at least 1 - kSoleHolderMargin of the mass is never
// evicted: its score is +inf and renormalization refuses it.
inline constexpr double kSoleHolderMargin = 1e-12;
inline constexpr double kSimplexTolerance = 1e-9;
inline constexpr double kInfiniteScore = std::numeric_limits<double>::infinity();

// c_j = alpha_j / (1 - alpha_j) * ||V alpha^T - v_j||_2 for all j, with the
// attention output formed once.
CaoteScores caote_scores(const CaoteInput& in);

// Normalizes a non-negative base score vector onto the simplex (skipped
// when it is already flagged normalized) and applies caote_scores.
CaoteScores caote_scores_general(const ScoreVector& base, const Matrix& values);

// Same weighting as caote_scores but measured against the unweighted mean
// of the values instead of the attention output.
CaoteScores fast_caote_scores(const CaoteInput& in);
CaoteScores fast_caote_scores_general(const ScoreVector& base, const Matrix& values);

// Drops entry j and rescales the rest by 1 / (1 - alpha_j).
ScoreVector renormalize_after_eviction(const ScoreVector& alpha, std::size_t j);

// Brute-force eviction error ||X_attn - X'_attn,j||_2: renormalizes, rebuilds
// the post-eviction output from the surviving rows and measures the
// distance. Shares nothing with caote_scores beyond numeric primitives.
double eviction_error_oracle(const CaoteInput& in, std::size_t j);

struct LogitErrorCheck {
    Vector observed;    // logits(dense) - logits(token j evicted), last token
    Vector predicted;   // W_H (W_O d + W_FFN W_O d), d = attention-output change
    Vector attn_delta;  // d, heads concatenated
};

// Single-layer model only. Evicts token j from every head before the last
// token attends, and compares the logit change against its linear
// propagation through W_O, W_FFN and W_H.
LogitErrorCheck logit_error_check(const ToyModel& model, const Matrix& hidden_all, std::size_t j,
                                  const AttentionOptions& opts = {});

}  // namespace kvevict
