#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "moe_absa/config.hpp"
#include "moe_absa/tensor.hpp"

namespace moeabsa {

inline constexpr int kCheckpointVersion = 1;
inline constexpr char kCheckpointMagic[9] = "MOEABSA1";

struct CheckpointError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Layout: 8-byte magic, u64 metadata length, JSON metadata (version, stage,
// config, tensor manifest, rng state, metrics), float32 payloads in
// manifest order, u64 FNV-1a checksum of the payload bytes.
void save_checkpoint(const std::string& path, const StageConfig& config,
                     const std::vector<std::pair<std::string, const Tensor*>>& tensors,
                     const std::string& rng_state,
                     const nlohmann::ordered_json& metrics = {});

struct LoadedCheckpoint {
    int version = 0;
    StageConfig config;
    std::map<std::string, Tensor> tensors;
    std::string rng_state;
    nlohmann::json metrics;
};

LoadedCheckpoint load_checkpoint(const std::string& path);

}  // namespace moeabsa
