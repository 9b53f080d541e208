#pragma once

#include <string>

#include <json.hpp>

#include "simplihumon/model.hpp"

namespace simplihumon {

inline constexpr const char* kCheckpointVersion = "simplihumon-ckpt-v1";

nlohmann::ordered_json config_to_json(const ModelConfig& c);

/// Parses a model config object. Missing fields keep their defaults; unknown
/// fields and type mismatches raise ConfigError naming the field.
ModelConfig config_from_json(const nlohmann::json& j);

struct Checkpoint {
  ModelConfig config;
  ModelParams params;
};

/// Writes prefix.json (manifest: version, dtype, blob name, embedded config,
/// per-parameter name/shape/dtype/offset/nbytes in visitation order) and
/// prefix.blob (the raw little-endian values).
void save_checkpoint(const std::string& prefix, ModelParams& params, const ModelConfig& config);

/// Reads a checkpoint pair back. Blobs may store f64 or f32 values; f32 is
/// widened on load.
Checkpoint load_checkpoint(const std::string& prefix);

}  // namespace simplihumon
