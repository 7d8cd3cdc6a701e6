#include "kvevict/model_io.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace kvevict {

using nlohmann::json;

namespace {

json matrix_to_json(const Matrix& m) {
    json rows = json::array();
    for (std::size_t r = 0; r < m.rows(); ++r) {
        const auto row = m.row(r);
        rows.push_back(std::vector<double>(row.begin(), row.end()));
    }
    return rows;
}

Matrix matrix_from_json(const json& j, const char* name) {
    if (!j.is_array()) throw std::invalid_argument(std::string(name) + " must be an array of rows");
    Matrix m;
    for (const auto& row : j) m.append_row(row.get<std::vector<double>>());
    return m;
}

}  // namespace

std::string model_to_json(const ToyModel& model) {
    json j;
    j["config"] = {{"n_layers", model.config.n_layers},
                   {"n_heads", model.config.n_heads},
                   {"d_model", model.config.d_model},
                   {"vocab", model.config.vocab},
                   {"seed", model.config.seed}};
    json layers = json::array();
    for (const auto& w : model.layers) {
        layers.push_back({{"w_q", matrix_to_json(w.w_q)},
                          {"w_k", matrix_to_json(w.w_k)},
                          {"w_v", matrix_to_json(w.w_v)},
                          {"w_o", matrix_to_json(w.w_o)},
                          {"w_ffn", matrix_to_json(w.w_ffn)}});
    }
    j["layers"] = std::move(layers);
    j["w_h"] = matrix_to_json(model.w_h);
    return j.dump();
}

ToyModel model_from_json(const std::string& text) {
    ToyModel model;
    try {
        const json j = json::parse(text);
        const auto& c = j.at("config");
        model.config.n_layers = c.at("n_layers").get<std::size_t>();
        model.config.n_heads = c.at("n_heads").get<std::size_t>();
        model.config.d_model = c.at("d_model").get<std::size_t>();
        model.config.vocab = c.at("vocab").get<std::size_t>();
        model.config.seed = c.value("seed", std::uint64_t{0});
        for (const auto& l : j.at("layers")) {
            LayerWeights w;
            w.w_q = matrix_from_json(l.at("w_q"), "w_q");
            w.w_k = matrix_from_json(l.at("w_k"), "w_k");
            w.w_v = matrix_from_json(l.at("w_v"), "w_v");
            w.w_o = matrix_from_json(l.at("w_o"), "w_o");
            w.w_ffn = matrix_from_json(l.at("w_ffn"), "w_ffn");
            model.layers.push_back(std::move(w));
        }
        model.w_h = matrix_from_json(j.at("w_h"), "w_h");
    } catch (const json::exception& e) {
        throw std::invalid_argument(std::string("malformed weights JSON: ") + e.what());
    }
    validate_model(model);
    return model;
}

void save_model(const ToyModel& model, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    out << model_to_json(model) << '\n';
    if (!out) throw std::runtime_error("failed writing " + path.string());
}

ToyModel load_model(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open weights file " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return model_from_json(ss.str());
}

}  // namespace kvevict
