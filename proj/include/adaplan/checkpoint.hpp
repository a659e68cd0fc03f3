#pragma once

#include <filesystem>
#include <string_view>

#include "adaplan/mlp.hpp"
#include "json.hpp"

namespace adaplan {

// Network checkpoint layout:
//   "ADPN1\n"
//   one JSON header line: {"spec", "param_count", "shapes", "meta"}
//   param_count little-endian float64 values in flat parameter order
inline constexpr std::string_view kCheckpointMagic = "ADPN1\n";

struct Checkpoint {
  NetSpec spec;
  NetParams params;
  nlohmann::json meta;  // seed, training metadata, owner-specific fields
};

void save_checkpoint(const std::filesystem::path& path, const NetSpec& spec,
                     const NetParams& params, const nlohmann::json& meta);

Checkpoint load_checkpoint(const std::filesystem::path& path);

// Deterministic JSON file helpers shared by the sidecars and manifests.
void write_json_file(const std::filesystem::path& path, const nlohmann::json& j);
nlohmann::json read_json_file(const std::filesystem::path& path);

}  // namespace adaplan
