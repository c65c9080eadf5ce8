#pragma once

#include <cstdint>
#include <string>

#include "json.hpp"
#include "moe_absa/losses.hpp"
#include "moe_absa/moe.hpp"

namespace moeabsa {

enum class Stage { sentiment, acd, absa };
enum class Routing { dynamic, hard_gate };

const char* to_string(Stage s);
const char* to_string(Routing r);
Stage stage_from_string(const std::string& s);
Routing routing_from_string(const std::string& s);

struct StageConfig {
    Stage stage = Stage::absa;
    double lr = 1.8552e-5;
    int batch_size = 8;
    int epochs = 3;
    std::uint64_t seed = 42;
    int dim = 256;     // embedding width (768 for fidelity runs)
    int hidden = 256;  // expert hidden width
    GateConfig gate;
    LossWeights loss;
    Routing routing = Routing::dynamic;
    bool gate_concat_sentence = false;  // gate sees aspect (+) sentence embedding
    double gate_bias_skew = 0.0;        // stress knob: initial bias on experts 0..E/2-1
    bool enable_ir = true;
    bool enable_fr = true;

    // reference hyperparameters per stage
    static StageConfig defaults(Stage stage);

    int gate_in_dim() const { return gate_concat_sentence ? 2 * dim : dim; }
};

nlohmann::ordered_json config_to_json(const StageConfig& c);
StageConfig config_from_json(const nlohmann::json& j);

}  // namespace moeabsa
