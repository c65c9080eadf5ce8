#include "moe_absa/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace moeabsa {

const char* to_string(Stage s) {
    switch (s) {
        case Stage::sentiment: return "sentiment";
        case Stage::acd: return "acd";
        case Stage::absa: return "absa";
    }
    return "?";
}

const char* to_string(Routing r) {
    return r == Routing::dynamic ? "dynamic" : "hard_gate";
}

Stage stage_from_string(const std::string& s) {
    if (s == "sentiment") return Stage::sentiment;
    if (s == "acd") return Stage::acd;
    if (s == "absa") return Stage::absa;
    throw std::invalid_argument("unknown stage '" + s + "'");
}

Routing routing_from_string(const std::string& s) {
    if (s == "dynamic") return Routing::dynamic;
    if (s == "hard_gate") return Routing::hard_gate;
    throw std::invalid_argument("unknown routing '" + s + "'");
}

StageConfig StageConfig::defaults(Stage stage) {
    StageConfig c;
    c.stage = stage;
    switch (stage) {
        case Stage::sentiment:
            c.lr = 2e-5;
            c.batch_size = 32;
            c.epochs = 4;
            break;
        case Stage::acd:
            c.lr = 1.7e-5;
            c.batch_size = 8;
            c.epochs = 4;
            break;
        case Stage::absa:
            c.lr = 1.8552e-5;
            c.batch_size = 8;
            c.epochs = 3;
            break;
    }
    return c;
}

nlohmann::ordered_json config_to_json(const StageConfig& c) {
    nlohmann::ordered_json j;
    j["stage"] = to_string(c.stage);
    j["lr"] = c.lr;
    j["batch_size"] = c.batch_size;
    j["epochs"] = c.epochs;
    j["seed"] = c.seed;
    j["dim"] = c.dim;
    j["hidden"] = c.hidden;
    j["gate"] = {{"n_experts", c.gate.n_experts},
                 {"top_k", c.gate.top_k},
                 {"capacity_factor", c.gate.capacity_factor},
                 {"noise_scale", c.gate.noise_scale},
                 {"n_groups", c.gate.n_groups}};
    j["loss"] = {{"lambda_aux", c.loss.lambda_aux},
                 {"lambda_mse", c.loss.lambda_mse},
                 {"enable_aux", c.loss.enable_aux},
                 {"enable_mse", c.loss.enable_mse}};
    j["routing"] = to_string(c.routing);
    j["gate_concat_sentence"] = c.gate_concat_sentence;
    j["gate_bias_skew"] = c.gate_bias_skew;
    j["enable_ir"] = c.enable_ir;
    j["enable_fr"] = c.enable_fr;
    return j;
}

StageConfig config_from_json(const nlohmann::json& j) {
    StageConfig c;
    c.stage = stage_from_string(j.at("stage").get<std::string>());
    c.lr = j.at("lr").get<double>();
    c.batch_size = j.at("batch_size").get<int>();
    c.epochs = j.at("epochs").get<int>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.dim = j.at("dim").get<int>();
    c.hidden = j.at("hidden").get<int>();
    const auto& g = j.at("gate");
    c.gate.n_experts = g.at("n_experts").get<int>();
    c.gate.top_k = g.at("top_k").get<int>();
    c.gate.capacity_factor = g.at("capacity_factor").get<double>();
    c.gate.noise_scale = g.at("noise_scale").get<double>();
    c.gate.n_groups = g.at("n_groups").get<int>();
    const auto& l = j.at("loss");
    c.loss.lambda_aux = l.at("lambda_aux").get<double>();
    c.loss.lambda_mse = l.at("lambda_mse").get<double>();
    c.loss.enable_aux = l.at("enable_aux").get<bool>();
    c.loss.enable_mse = l.at("enable_mse").get<bool>();
    c.routing = routing_from_string(j.at("routing").get<std::string>());
    c.gate_concat_sentence = j.at("gate_concat_sentence").get<bool>();
    c.gate_bias_skew = j.at("gate_bias_skew").get<double>();
    c.enable_ir = j.at("enable_ir").get<bool>();
    c.enable_fr = j.at("enable_fr").get<bool>();
    return c;
}

namespace {

std::uint64_t fnv1a(const std::vector<unsigned char>& data) {
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char c : data) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

void put_u64(std::vector<unsigned char>& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xFF));
}

std::uint64_t get_u64(const unsigned char* p) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
    return v;
}

void put_f32(std::vector<unsigned char>& out, float f) {
    std::uint32_t bits;
    std::memcpy(&bits, &f, 4);
    for (int i = 0; i < 4; ++i)
        out.push_back(static_cast<unsigned char>((bits >> (8 * i)) & 0xFF));
}

float get_f32(const unsigned char* p) {
    std::uint32_t bits = 0;
    for (int i = 0; i < 4; ++i) bits |= static_cast<std::uint32_t>(p[i]) << (8 * i);
    float f;
    std::memcpy(&f, &bits, 4);
    return f;
}

}  // namespace

void save_checkpoint(const std::string& path, const StageConfig& config,
                     const std::vector<std::pair<std::string, const Tensor*>>& tensors,
                     const std::string& rng_state, const nlohmann::ordered_json& metrics) {
    nlohmann::ordered_json meta;
    meta["version"] = kCheckpointVersion;
    meta["stage"] = to_string(config.stage);
    meta["config"] = config_to_json(config);
    nlohmann::ordered_json manifest = nlohmann::ordered_json::array();
    for (const auto& [name, t] : tensors)
        manifest.push_back({{"name", name}, {"rows", t->rows}, {"cols", t->cols}});
    meta["manifest"] = manifest;
    meta["rng_state"] = rng_state;
    meta["metrics"] = metrics;
    const std::string meta_str = meta.dump();

    std::vector<unsigned char> payload;
    for (const auto& [name, t] : tensors)
        for (double x : t->v) put_f32(payload, static_cast<float>(x));

    std::vector<unsigned char> blob;
    blob.insert(blob.end(), kCheckpointMagic, kCheckpointMagic + 8);
    put_u64(blob, meta_str.size());
    blob.insert(blob.end(), meta_str.begin(), meta_str.end());
    blob.insert(blob.end(), payload.begin(), payload.end());
    put_u64(blob, fnv1a(payload));

    std::ofstream f(path, std::ios::binary);
    if (!f) throw CheckpointError("cannot write checkpoint: " + path);
    f.write(reinterpret_cast<const char*>(blob.data()), static_cast<std::streamsize>(blob.size()));
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw CheckpointError("cannot open checkpoint: " + path);
    std::vector<unsigned char> blob((std::istreambuf_iterator<char>(f)),
                                    std::istreambuf_iterator<char>());
    if (blob.size() < 16 || std::memcmp(blob.data(), kCheckpointMagic, 8) != 0)
        throw CheckpointError("bad checkpoint magic");
    const std::uint64_t meta_len = get_u64(blob.data() + 8);
    if (blob.size() < 16 + meta_len + 8) throw CheckpointError("truncated checkpoint");

    nlohmann::json meta;
    try {
        meta = nlohmann::json::parse(blob.begin() + 16, blob.begin() + 16 + meta_len);
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointError(std::string("corrupt checkpoint metadata: ") + e.what());
    }
    LoadedCheckpoint lc;
    lc.version = meta.at("version").get<int>();
    if (lc.version != kCheckpointVersion)
        throw CheckpointError("unsupported checkpoint version " + std::to_string(lc.version));
    lc.config = config_from_json(meta.at("config"));
    lc.rng_state = meta.at("rng_state").get<std::string>();
    lc.metrics = meta.at("metrics");

    std::size_t need = 0;
    for (const auto& m : meta.at("manifest"))
        need += static_cast<std::size_t>(m.at("rows").get<int>()) * m.at("cols").get<int>() * 4;
    if (blob.size() != 16 + meta_len + need + 8)
        throw CheckpointError("checkpoint payload size mismatch");

    const unsigned char* payload = blob.data() + 16 + meta_len;
    const std::uint64_t stored =
        get_u64(blob.data() + blob.size() - 8);
    std::vector<unsigned char> payload_bytes(payload, payload + need);
    if (fnv1a(payload_bytes) != stored)
        throw CheckpointError("checkpoint checksum mismatch (corrupt payload)");

    std::size_t off = 0;
    for (const auto& m : meta.at("manifest")) {
        Tensor t(m.at("rows").get<int>(), m.at("cols").get<int>());
        for (auto& x : t.v) {
            x = static_cast<double>(get_f32(payload + off));
            off += 4;
        }
        lc.tensors.emplace(m.at("name").get<std::string>(), std::move(t));
    }
    return lc;
}

}  // namespace moeabsa
