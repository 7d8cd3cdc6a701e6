#pragma once

#include <filesystem>
#include <string>

#include "kvevict/attention.hpp"

namespace kvevict {

// JSON layout:
//   {"config": {"n_layers", "n_heads", "d_model", "vocab", "seed"},
//    "layers": [{"w_q": [[...]], "w_k", "w_v", "w_o", "w_ffn"}, ...],
//    "w_h": [[...]]}
// Matrices are arrays of rows. Doubles are written with round-trip precision.
std::string model_to_json(const ToyModel& model);
ToyModel model_from_json(const std::string& text);

void save_model(const ToyModel& model, const std::filesystem::path& path);
ToyModel load_model(const std::filesystem::path& path);

}  // namespace kvevict
