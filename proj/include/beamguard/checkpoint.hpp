#pragma once

#include <json.hpp>

#include <fstream>

#include "beamguard/model.hpp"

namespace beamguard::ckpt {

// single JSON header line, then raw little-endian f32 blobs in header order
inline void save_checkpoint(model::Model<float>& m, const std::string& path) {
  nlohmann::json h;
  h["format"] = "beamguard-checkpoint";
  h["version"] = 1;
  h["backbone"] = {{"variant", m.backbone.variant},
                   {"stage_channels", m.backbone.stage_channels},
                   {"input", {m.backbone.input_h, m.backbone.input_w}},
                   {"num_classes", m.backbone.num_classes}};
  h["frm"] = {{"enabled", m.frm_cfg.enabled},
              {"bottleneck_channels", m.frm_cfg.bottleneck_channels},
              {"depth", m.frm_cfg.depth}};
  h["normalization"] = {{"mean", m.norm.mean}, {"std", m.norm.stdev}};
  h["train_meta"] = {{"epochs_seen", m.epochs_seen}, {"seed", m.seed}};
  h["config_hash"] = m.config_hash;
  h["compat_hash"] = m.compat_hash;

  auto params = m.params();
  auto buffers = m.buffers();
  nlohmann::json arrays = nlohmann::json::array();
  for (auto& p : params)
    arrays.push_back({{"name", p.name}, {"shape", p.value->shape}, {"kind", "param"}});
  for (auto& b : buffers)
    arrays.push_back({{"name", b.name}, {"shape", b.value->shape}, {"kind", "buffer"}});
  h["arrays"] = arrays;

  std::ofstream f(path, std::ios::binary);
  if (!f) throw MissingArtifactError("cannot open for write: " + path);
  f << h.dump() << "\n";
  auto blob = [&](Tensor<float>* t) {
    f.write(reinterpret_cast<const char*>(t->data.data()),
            static_cast<std::streamsize>(t->data.size() * sizeof(float)));
  };
  for (auto& p : params) blob(p.value);
  for (auto& b : buffers) blob(b.value);
  if (!f) throw NumericError("short write: " + path);
}

inline model::Model<float> load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw MissingArtifactError("checkpoint not found: " + path);
  std::string line;
  if (!std::getline(f, line)) throw ConfigError("checkpoint missing header: " + path);
  nlohmann::json h;
  try {
    h = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("checkpoint header is not valid JSON: " + std::string(e.what()));
  }
  if (h.value("format", "") != "beamguard-checkpoint" || h.value("version", 0) != 1)
    throw ConfigError("unsupported checkpoint format: " + path);

  model::BackboneConfig bc;
  bc.variant = h["backbone"]["variant"].get<std::string>();
  bc.stage_channels = h["backbone"]["stage_channels"].get<std::vector<int>>();
  bc.input_h = h["backbone"]["input"][0].get<int>();
  bc.input_w = h["backbone"]["input"][1].get<int>();
  bc.num_classes = h["backbone"]["num_classes"].get<int>();
  model::FrmConfig fc;
  fc.enabled = h["frm"]["enabled"].get<bool>();
  fc.bottleneck_channels = h["frm"]["bottleneck_channels"].get<int>();
  fc.depth = h["frm"]["depth"].get<int>();

  model::Model<float> m(bc, fc);
  m.norm.mean = h["normalization"]["mean"].get<std::array<double, 3>>();
  m.norm.stdev = h["normalization"]["std"].get<std::array<double, 3>>();
  m.epochs_seen = h["train_meta"]["epochs_seen"].get<int64_t>();
  m.seed = h["train_meta"]["seed"].get<uint64_t>();
  m.config_hash = h["config_hash"].get<std::string>();
  m.compat_hash = h["compat_hash"].get<std::string>();

  auto params = m.params();
  auto buffers = m.buffers();
  auto find = [&](const std::string& name) -> Tensor<float>* {
    for (auto& p : params)
      if (p.name == name) return p.value;
    for (auto& b : buffers)
      if (b.name == name) return b.value;
    return nullptr;
  };
  for (const auto& a : h["arrays"]) {
    const std::string name = a["name"].get<std::string>();
    const auto shape = a["shape"].get<std::vector<int64_t>>();
    Tensor<float>* t = find(name);
    if (!t) throw ConfigError("checkpoint has unknown array: " + name);
    if (t->shape != shape) throw ConfigError("checkpoint shape mismatch for " + name);
    f.read(reinterpret_cast<char*>(t->data.data()),
           static_cast<std::streamsize>(t->data.size() * sizeof(float)));
    if (f.gcount() != static_cast<std::streamsize>(t->data.size() * sizeof(float)))
      throw ConfigError("checkpoint truncated at " + name);
  }
  return m;
}

}  // namespace beamguard::ckpt
