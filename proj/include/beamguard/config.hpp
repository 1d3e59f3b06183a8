#pragma once

#include <cstdint>
#include <fstream>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "beamguard/eval.hpp"

namespace beamguard::config {

inline uint64_t fnv1a64(std::string_view s) {
  uint64_t h = 14695981039346656037ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

inline std::string hex64(uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

inline nlohmann::json default_config_json() {
  return nlohmann::json{
      {"dataset",
       {{"num_records", 4000},
        {"scenarios",
         {{{"name", "s0"}, {"distractors", 0}, {"fraction", 0.25}},
          {{"name", "s2"}, {"distractors", 2}, {"fraction", 0.5}},
          {{"name", "s4"}, {"distractors", 4}, {"fraction", 0.25}}}},
        {"target_size_px", 12},
        {"distractor_size_min", 8},
        {"distractor_size_max", 14},
        {"target_color", {0.85, 0.08, 0.08}},
        {"color_margin", 0.25},
        {"num_bins", 8},
        {"nlos",
         {{"max_paths", 2},
          {"gain_min", 0.05},
          {"gain_max", 0.2},
          {"delay_max_ns", 200.0},
          {"angle_spread_rad", 0.0}}},
        {"splits", {{"train", 0.7}, {"val", 0.1}, {"test", 0.2}}}}},
      {"camera", {{"width", 64}, {"height", 64}, {"horizontal_fov_rad", 1.6}}},
      {"codebook",
       {{"num_antennas", 16},
        {"num_beams", 16},
        {"rate",
         {{"symbol_power", 1.0},
          {"noise_variance", 0.01},
          {"num_subcarriers", 8},
          {"subcarrier_spacing_hz", 1e6}}}}},
      {"model", {{"variant", "mini_residual"}, {"stage_channels", {16, 32, 64}}}},
      {"frm", {{"enabled", false}, {"bottleneck_channels", 32}, {"depth", 3}}},
      {"train",
       {{"batch_size", 32},
        {"epochs", 30},
        {"learning_rate", 1e-3},
        {"lr_decay_factor", 0.1},
        {"plateau_epochs", 3},
        {"distill_temperature", 20.0},
        {"distill_mix", 0.3}}},
      {"attack",
       {{"detector", "oracle"},
        {"bins", 8},
        {"data_fraction", 0.5},
        {"epsilon", 0.04},
        {"batch_size", 32},
        {"surrogate", {{"variant", "mini_plain"}, {"stage_channels", {16, 32}}}},
        {"train",
         {{"batch_size", 32},
          {"epochs", 12},
          {"learning_rate", 1e-3},
          {"lr_decay_factor", 0.1},
          {"plateau_epochs", 3}}}}},
      {"grid",
       {{"epsilons", {0.02, 0.03, 0.04, 0.05}},
        {"sigmas", {0.01, 0.015, 0.02, 0.025}},
        {"topk", {1, 2, 3, 5}}}},
      {"eval", {{"rate_min_fraction", 0.5}, {"logit_records", 200}}},
      {"paths",
       {{"data", "data"}, {"models", "models"}, {"attacks", "attacks"}, {"reports", "reports"}}},
      {"seeds", {{"data", 123}, {"train", 1}, {"attack", 41}, {"noise", {11, 12, 13}}}}};
}

// overlay onto base, recursively; keys absent from base are rejected so typos
// in config files fail loudly instead of silently using a default
inline void merge_config(nlohmann::json& base, const nlohmann::json& overlay,
                         const std::string& at = "") {
  if (!overlay.is_object() || !base.is_object())
    throw ConfigError("config: expected an object at '" + (at.empty() ? "." : at) + "'");
  for (const auto& [key, value] : overlay.items()) {
    std::string path = at.empty() ? key : at + "." + key;
    auto it = base.find(key);
    if (it == base.end()) throw ConfigError("config: unknown key '" + path + "'");
    nlohmann::json& slot = *it;
    if (slot.is_object()) {
      merge_config(slot, value, path);
      continue;
    }
    bool both_numbers = slot.is_number() && value.is_number();
    bool same_kind = slot.type() == value.type() ||
                     (slot.is_array() && value.is_array()) || both_numbers;
    if (!same_kind)
      throw ConfigError("config: wrong value type for '" + path + "'");
    slot = value;
  }
}

struct RunConfig {
  sim::GenParams gen;  // dataset + camera + codebook + rate, seeded by seeds.data
  model::BackboneConfig arch;
  model::FrmConfig frm;
  train::TrainConfig train_cfg;
  double distill_temperature = 20.0;
  double distill_mix = 0.3;

  struct AttackSection {
    std::string detector = "oracle";
    int bins = 8;
    double data_fraction = 0.5;
    double epsilon = 0.04;
    int batch_size = 32;
    model::BackboneConfig surrogate;
    train::TrainConfig train_cfg;
  } atk;

  eval::AttackGrid grid;
  double rate_min_fraction = 0.5;
  int logit_records = 200;

  struct Paths {
    std::string data, models, attacks, reports;
  } paths;

  struct Seeds {
    uint64_t data = 123, train = 1, attack = 41;
    std::vector<uint64_t> noise{11, 12, 13};
  } seeds;

  nlohmann::json effective;
  std::string config_hash = "0";
  std::string compat_hash = "0";
};

// content hash over everything except artifact locations, so moving output
// directories never changes what an artifact claims it was built from
inline std::string config_hash_of(const nlohmann::json& effective) {
  nlohmann::json scoped = effective;
  scoped.erase("paths");
  return hex64(fnv1a64(scoped.dump()));
}

// artifacts are comparable only when the RF and optics sections agree
inline std::string compat_hash_of(const nlohmann::json& effective) {
  nlohmann::json scoped{{"camera", effective.at("camera")},
                        {"codebook", effective.at("codebook")}};
  return hex64(fnv1a64(scoped.dump()));
}

inline RunConfig parse_run_config(const nlohmann::json& j) {
  RunConfig rc;
  rc.effective = j;
  rc.config_hash = config_hash_of(j);
  rc.compat_hash = compat_hash_of(j);

  const auto& d = j.at("dataset");
  auto& dp = rc.gen.dataset;
  dp.num_records = d.at("num_records");
  dp.scenarios.clear();
  for (const auto& s : d.at("scenarios")) {
    for (const auto& [k, v] : s.items())
      if (k != "name" && k != "distractors" && k != "fraction")
        throw ConfigError("config: unknown key 'dataset.scenarios[]." + k + "'");
    sim::ScenarioSpec spec;
    spec.name = s.at("name");
    spec.distractors = s.at("distractors");
    spec.fraction = s.at("fraction");
    dp.scenarios.push_back(spec);
  }
  dp.target_size_px = d.at("target_size_px");
  dp.distractor_size_min = d.at("distractor_size_min");
  dp.distractor_size_max = d.at("distractor_size_max");
  const auto& tc = d.at("target_color");
  if (!tc.is_array() || tc.size() != 3)
    throw ConfigError("config: dataset.target_color needs three channels");
  for (int c = 0; c < 3; c++) dp.target_color[c] = tc.at(c).get<float>();
  dp.color_margin = d.at("color_margin");
  dp.num_bins = d.at("num_bins");
  dp.nlos.max_paths = d.at("nlos").at("max_paths");
  dp.nlos.gain_min = d.at("nlos").at("gain_min");
  dp.nlos.gain_max = d.at("nlos").at("gain_max");
  dp.nlos.delay_max_ns = d.at("nlos").at("delay_max_ns");
  dp.nlos.angle_spread_rad = d.at("nlos").at("angle_spread_rad");
  dp.split.train = d.at("splits").at("train");
  dp.split.val = d.at("splits").at("val");
  dp.split.test = d.at("splits").at("test");

  rc.gen.camera.width = j.at("camera").at("width");
  rc.gen.camera.height = j.at("camera").at("height");
  rc.gen.camera.horizontal_fov_rad = j.at("camera").at("horizontal_fov_rad");

  const auto& cb = j.at("codebook");
  rc.gen.num_antennas = cb.at("num_antennas");
  rc.gen.num_beams = cb.at("num_beams");
  rc.gen.rate.symbol_power = cb.at("rate").at("symbol_power");
  rc.gen.rate.noise_variance = cb.at("rate").at("noise_variance");
  rc.gen.rate.num_subcarriers = cb.at("rate").at("num_subcarriers");
  rc.gen.rate.subcarrier_spacing_hz = cb.at("rate").at("subcarrier_spacing_hz");

  rc.arch.variant = j.at("model").at("variant");
  rc.arch.stage_channels = j.at("model").at("stage_channels").get<std::vector<int>>();
  rc.arch.num_classes = rc.gen.num_beams;
  rc.arch.input_h = rc.gen.camera.height;
  rc.arch.input_w = rc.gen.camera.width;

  rc.frm.enabled = j.at("frm").at("enabled");
  rc.frm.bottleneck_channels = j.at("frm").at("bottleneck_channels");
  rc.frm.depth = j.at("frm").at("depth");

  const auto& t = j.at("train");
  rc.train_cfg.batch_size = t.at("batch_size");
  rc.train_cfg.epochs = t.at("epochs");
  rc.train_cfg.learning_rate = t.at("learning_rate");
  rc.train_cfg.lr_decay_factor = t.at("lr_decay_factor");
  rc.train_cfg.plateau_epochs = t.at("plateau_epochs");
  rc.distill_temperature = t.at("distill_temperature");
  rc.distill_mix = t.at("distill_mix");

  const auto& a = j.at("attack");
  rc.atk.detector = a.at("detector");
  rc.atk.bins = a.at("bins");
  rc.atk.data_fraction = a.at("data_fraction");
  rc.atk.epsilon = a.at("epsilon");
  rc.atk.batch_size = a.at("batch_size");
  rc.atk.surrogate.variant = a.at("surrogate").at("variant");
  rc.atk.surrogate.stage_channels = a.at("surrogate").at("stage_channels").get<std::vector<int>>();
  rc.atk.surrogate.num_classes = rc.atk.bins;
  rc.atk.surrogate.input_h = rc.gen.camera.height;
  rc.atk.surrogate.input_w = rc.gen.camera.width;
  rc.atk.train_cfg.batch_size = a.at("train").at("batch_size");
  rc.atk.train_cfg.epochs = a.at("train").at("epochs");
  rc.atk.train_cfg.learning_rate = a.at("train").at("learning_rate");
  rc.atk.train_cfg.lr_decay_factor = a.at("train").at("lr_decay_factor");
  rc.atk.train_cfg.plateau_epochs = a.at("train").at("plateau_epochs");

  rc.grid.epsilons = j.at("grid").at("epsilons").get<std::vector<double>>();
  rc.grid.sigmas = j.at("grid").at("sigmas").get<std::vector<double>>();
  rc.grid.topk = j.at("grid").at("topk").get<std::vector<int>>();

  rc.rate_min_fraction = j.at("eval").at("rate_min_fraction");
  rc.logit_records = j.at("eval").at("logit_records");

  rc.paths.data = j.at("paths").at("data");
  rc.paths.models = j.at("paths").at("models");
  rc.paths.attacks = j.at("paths").at("attacks");
  rc.paths.reports = j.at("paths").at("reports");

  rc.seeds.data = j.at("seeds").at("data");
  rc.seeds.train = j.at("seeds").at("train");
  rc.seeds.attack = j.at("seeds").at("attack");
  rc.seeds.noise = j.at("seeds").at("noise").get<std::vector<uint64_t>>();

  rc.gen.seed = rc.seeds.data;
  rc.gen.config_hash = rc.config_hash;
  rc.gen.compat_hash = rc.compat_hash;
  rc.train_cfg.seed = rc.seeds.train;
  rc.atk.train_cfg.seed = rc.seeds.attack;

  rc.train_cfg.validate();
  rc.atk.train_cfg.validate();
  rc.grid.validate();
  if (rc.atk.bins < 2) throw ConfigError("config: attack.bins must be at least 2");
  if (!(rc.atk.epsilon > 0) || rc.atk.epsilon >= 1)
    throw ConfigError("config: attack.epsilon must lie in (0, 1)");
  if (rc.atk.detector != "oracle" && rc.atk.detector != "blob" && rc.atk.detector != "largest")
    throw ConfigError("config: attack.detector must be oracle, blob, or largest");
  if (!(rc.rate_min_fraction > 0) || rc.rate_min_fraction >= 1)
    throw ConfigError("config: eval.rate_min_fraction must lie in (0, 1)");
  if (rc.logit_records < 0) throw ConfigError("config: eval.logit_records must be >= 0");
  if (rc.seeds.noise.empty()) throw ConfigError("config: seeds.noise must not be empty");
  return rc;
}

// defaults <- file <- flag overrides, hashed after all three are folded in
inline RunConfig load_run_config(
    const std::string& file, const std::function<void(nlohmann::json&)>& apply_flags = nullptr) {
  nlohmann::json j = default_config_json();
  if (!file.empty()) {
    std::ifstream in(file);
    if (!in) throw MissingArtifactError("config file not found: " + file);
    nlohmann::json overlay;
    try {
      in >> overlay;
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("config: cannot parse " + file + ": " + e.what());
    }
    merge_config(j, overlay);
  }
  if (apply_flags) apply_flags(j);
  return parse_run_config(j);
}

}  // namespace beamguard::config
