#include "simplihumon/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>

namespace simplihumon {

static_assert(std::endian::native == std::endian::little,
              "checkpoint blobs assume a little-endian host");

namespace {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

std::size_t read_size_field(const json& j, const char* key, std::size_t fallback) {
  auto it = j.find(key);
  if (it == j.end()) return fallback;
  if (!it->is_number_integer() || (!it->is_number_unsigned() && it->get<long long>() < 0))
    throw ConfigError("model config field \"" + std::string(key) +
                      "\" must be a non-negative integer");
  return it->get<std::size_t>();
}

std::string read_string_field(const json& j, const char* key, const std::string& fallback) {
  auto it = j.find(key);
  if (it == j.end()) return fallback;
  if (!it->is_string())
    throw ConfigError("model config field \"" + std::string(key) + "\" must be a string");
  return it->get<std::string>();
}

}  // namespace

ordered_json config_to_json(const ModelConfig& c) {
  return ordered_json{
      {"L", c.L},
      {"d_model", c.d_model},
      {"n_heads", c.n_heads},
      {"ffn_mult", c.ffn_mult},
      {"H", c.H},
      {"F", c.F},
      {"M", c.M},
      {"K", c.K},
      {"task_mode", to_string(c.task_mode)},
      {"attn_variant", to_string(c.attn_variant)},
      {"norm_variant", to_string(c.norm_variant)},
      {"type_embedding_enabled", c.type_embedding_enabled},
  };
}

ModelConfig config_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("model config must be a JSON object");
  static const char* known[] = {"L", "d_model", "n_heads", "ffn_mult",
                                "H", "F",       "M",       "K",
                                "task_mode", "attn_variant", "norm_variant",
                                "type_embedding_enabled"};
  for (const auto& item : j.items()) {
    bool ok = false;
    for (const char* k : known) ok = ok || item.key() == k;
    if (!ok) throw ConfigError("unknown model config field \"" + item.key() + "\"");
  }
  ModelConfig c;
  c.L = read_size_field(j, "L", c.L);
  c.d_model = read_size_field(j, "d_model", c.d_model);
  c.n_heads = read_size_field(j, "n_heads", c.n_heads);
  c.ffn_mult = read_size_field(j, "ffn_mult", c.ffn_mult);
  c.H = read_size_field(j, "H", c.H);
  c.F = read_size_field(j, "F", c.F);
  c.M = read_size_field(j, "M", c.M);
  c.K = read_size_field(j, "K", c.K);
  c.task_mode = task_mode_from_string(read_string_field(j, "task_mode", to_string(c.task_mode)));
  c.attn_variant =
      attn_variant_from_string(read_string_field(j, "attn_variant", to_string(c.attn_variant)));
  c.norm_variant =
      norm_variant_from_string(read_string_field(j, "norm_variant", to_string(c.norm_variant)));
  if (auto it = j.find("type_embedding_enabled"); it != j.end()) {
    if (!it->is_boolean())
      throw ConfigError("model config field \"type_embedding_enabled\" must be a boolean");
    c.type_embedding_enabled = it->get<bool>();
  }
  validate_config(c);
  return c;
}

void save_checkpoint(const std::string& prefix, ModelParams& params, const ModelConfig& config) {
  const fs::path manifest_path = prefix + ".json";
  const fs::path blob_path = prefix + ".blob";
  if (manifest_path.has_parent_path()) fs::create_directories(manifest_path.parent_path());

  ordered_json entries = ordered_json::array();
  std::ofstream blob(blob_path, std::ios::binary | std::ios::trunc);
  if (!blob) throw DataError("cannot open " + blob_path.string() + " for writing");
  std::size_t offset = 0;
  visit_params(params, config, [&](const std::string& name, Tensor& t) {
    const std::size_t nbytes = t.numel() * sizeof(double);
    entries.push_back(ordered_json{{"name", name},
                                   {"shape", t.shape()},
                                   {"dtype", "f64"},
                                   {"offset", offset},
                                   {"nbytes", nbytes}});
    blob.write(reinterpret_cast<const char*>(t.data().data()),
               static_cast<std::streamsize>(nbytes));
    offset += nbytes;
  });
  blob.close();
  if (!blob) throw DataError("failed writing " + blob_path.string());

  ordered_json manifest{
      {"version", kCheckpointVersion},
      {"dtype", "f64"},
      {"blob", blob_path.filename().string()},
      {"config", config_to_json(config)},
      {"params", std::move(entries)},
  };
  std::ofstream out(manifest_path, std::ios::trunc);
  if (!out) throw DataError("cannot open " + manifest_path.string() + " for writing");
  out << manifest.dump(2) << "\n";
  if (!out) throw DataError("failed writing " + manifest_path.string());
}

Checkpoint load_checkpoint(const std::string& prefix) {
  const fs::path manifest_path = prefix + ".json";
  std::ifstream in(manifest_path);
  if (!in) throw DataError("cannot open checkpoint manifest " + manifest_path.string());
  json manifest;
  try {
    in >> manifest;
  } catch (const json::exception& e) {
    throw DataError(manifest_path.string() + ": " + e.what());
  }
  if (!manifest.is_object() || !manifest.contains("version") ||
      !manifest["version"].is_string())
    throw DataError(manifest_path.string() + ": missing checkpoint version");
  if (manifest["version"].get<std::string>() != kCheckpointVersion)
    throw DataError(manifest_path.string() + ": unsupported checkpoint version \"" +
                    manifest["version"].get<std::string>() + "\"");
  const std::string file_dtype = manifest.value("dtype", "f64");
  if (file_dtype != "f64" && file_dtype != "f32")
    throw DataError(manifest_path.string() + ": unsupported dtype \"" + file_dtype + "\"");
  if (!manifest.contains("config")) throw DataError(manifest_path.string() + ": missing config");
  if (!manifest.contains("blob") || !manifest["blob"].is_string())
    throw DataError(manifest_path.string() + ": missing blob reference");
  if (!manifest.contains("params") || !manifest["params"].is_array())
    throw DataError(manifest_path.string() + ": missing params list");

  Checkpoint ckpt;
  ckpt.config = config_from_json(manifest["config"]);
  ckpt.params = init_params(ckpt.config, 0);

  const fs::path blob_path = manifest_path.parent_path() / manifest["blob"].get<std::string>();
  std::ifstream blob(blob_path, std::ios::binary);
  if (!blob) throw DataError("cannot open checkpoint blob " + blob_path.string());
  std::vector<char> bytes((std::istreambuf_iterator<char>(blob)),
                          std::istreambuf_iterator<char>());

  const json& list = manifest["params"];
  std::size_t idx = 0;
  visit_params(ckpt.params, ckpt.config, [&](const std::string& name, Tensor& t) {
    if (idx >= list.size())
      throw DataError(manifest_path.string() + ": params list ends before \"" + name + "\"");
    const json& e = list[idx++];
    const std::string ename = e.value("name", "");
    if (ename != name)
      throw DataError(manifest_path.string() + ": parameter " + std::to_string(idx - 1) +
                      " is \"" + ename + "\", expected \"" + name + "\"");
    const Shape eshape = e.value("shape", Shape{});
    if (eshape != t.shape())
      throw DataError(manifest_path.string() + ": \"" + name + "\" has shape " +
                      shape_str(eshape) + ", expected " + shape_str(t.shape()));
    const std::string dtype = e.value("dtype", "f64");
    const std::size_t elem = dtype == "f32" ? 4 : 8;
    if (dtype != "f64" && dtype != "f32")
      throw DataError(manifest_path.string() + ": \"" + name + "\" has unsupported dtype \"" +
                      dtype + "\"");
    const std::size_t offset = e.value("offset", std::size_t{0});
    const std::size_t nbytes = e.value("nbytes", std::size_t{0});
    if (nbytes != t.numel() * elem)
      throw DataError(manifest_path.string() + ": \"" + name + "\" declares " +
                      std::to_string(nbytes) + " bytes, expected " +
                      std::to_string(t.numel() * elem));
    if (offset + nbytes > bytes.size())
      throw DataError(blob_path.string() + ": \"" + name + "\" extends past end of blob");
    std::vector<double>& dst = t.mutable_data();
    if (dtype == "f64") {
      std::memcpy(dst.data(), bytes.data() + offset, nbytes);
    } else {
      for (std::size_t i = 0; i < t.numel(); ++i) {
        float f;
        std::memcpy(&f, bytes.data() + offset + i * 4, 4);
        dst[i] = static_cast<double>(f);
      }
    }
  });
  if (idx != list.size())
    throw DataError(manifest_path.string() + ": params list has " +
                    std::to_string(list.size()) + " entries, expected " + std::to_string(idx));
  return ckpt;
}

}  // namespace simplihumon
