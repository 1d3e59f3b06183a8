#pragma once

#include <array>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <string>
#include <vector>

#include "beamguard/camera.hpp"
#include "beamguard/common.hpp"
#include "beamguard/image_io.hpp"
#include "beamguard/rf.hpp"

namespace beamguard::sim {

struct ScenarioSpec {
  std::string name = "s2";
  int distractors = 2;
  double fraction = 1.0;
};

struct SplitFractions {
  double train = 0.7;
  double val = 0.1;
  double test = 0.2;
};

struct DatasetRecord {
  std::string id;
  std::string image_path;  // relative to the dataset directory
  int beam_label = 0;      // 1-based codebook index
  int bin_label = 0;       // 1-based horizontal bin
  Box target_bbox;
  std::vector<Box> distractor_boxes;
  double azimuth_rad = 0;
  std::string scenario_id;
  std::string split;
  rf::PathSpec los;
  std::vector<rf::PathSpec> nlos;
  img::ImageU8 image;
};

struct DatasetManifest {
  CameraModel camera;
  int num_antennas = 16;
  int num_beams = 16;
  rf::RateParams rate;
  uint64_t seed = 0;
  int num_records = 0;
  int num_bins = 8;
  SplitFractions split_fractions;
  int train_count = 0, val_count = 0, test_count = 0;
  std::vector<ScenarioSpec> scenarios;
  std::array<float, 3> target_color{0.85f, 0.08f, 0.08f};
  std::array<double, 3> mean{};
  std::array<double, 3> stdev{};
  std::string config_hash = "0";
  std::string compat_hash = "0";
};

struct Dataset {
  DatasetManifest manifest;
  std::vector<DatasetRecord> records;
};

namespace detail {

inline nlohmann::json box_to_json(const Box& b) {
  return nlohmann::json::array({b.x_min, b.y_min, b.x_max, b.y_max});
}

inline Box box_from_json(const nlohmann::json& j) {
  Box b;
  b.x_min = j.at(0);
  b.y_min = j.at(1);
  b.x_max = j.at(2);
  b.y_max = j.at(3);
  return b;
}

inline nlohmann::json path_to_json(const rf::PathSpec& p) {
  return {{"gain_re", p.gain.real()},
          {"gain_im", p.gain.imag()},
          {"azimuth_rad", p.azimuth_rad},
          {"elevation_rad", p.elevation_rad},
          {"delay_s", p.delay_s}};
}

inline rf::PathSpec path_from_json(const nlohmann::json& j) {
  rf::PathSpec p;
  p.gain = {j.at("gain_re").get<double>(), j.at("gain_im").get<double>()};
  p.azimuth_rad = j.at("azimuth_rad");
  p.elevation_rad = j.at("elevation_rad");
  p.delay_s = j.at("delay_s");
  return p;
}

}  // namespace detail

inline nlohmann::json record_to_json(const DatasetRecord& r) {
  nlohmann::json paths = nlohmann::json::array();
  paths.push_back(detail::path_to_json(r.los));
  for (const auto& p : r.nlos) paths.push_back(detail::path_to_json(p));
  nlohmann::json boxes = nlohmann::json::array();
  for (const auto& b : r.distractor_boxes) boxes.push_back(detail::box_to_json(b));
  return {{"id", r.id},
          {"image", r.image_path},
          {"beam_label", r.beam_label},
          {"bin_label", r.bin_label},
          {"target_bbox", detail::box_to_json(r.target_bbox)},
          {"distractor_boxes", boxes},
          {"azimuth_rad", r.azimuth_rad},
          {"scenario_id", r.scenario_id},
          {"split", r.split},
          {"paths", paths}};
}

inline DatasetRecord record_from_json(const nlohmann::json& j) {
  DatasetRecord r;
  r.id = j.at("id");
  r.image_path = j.at("image");
  r.beam_label = j.at("beam_label");
  r.bin_label = j.at("bin_label");
  r.target_bbox = detail::box_from_json(j.at("target_bbox"));
  for (const auto& b : j.at("distractor_boxes")) r.distractor_boxes.push_back(detail::box_from_json(b));
  r.azimuth_rad = j.at("azimuth_rad");
  r.scenario_id = j.at("scenario_id");
  r.split = j.at("split");
  const auto& paths = j.at("paths");
  if (paths.empty()) throw NumericError("dataset record without a line-of-sight path");
  r.los = detail::path_from_json(paths.at(0));
  for (size_t i = 1; i < paths.size(); i++) r.nlos.push_back(detail::path_from_json(paths.at(i)));
  return r;
}

inline nlohmann::json manifest_to_json(const DatasetManifest& m) {
  nlohmann::json scenarios = nlohmann::json::array();
  for (const auto& s : m.scenarios)
    scenarios.push_back({{"name", s.name}, {"distractors", s.distractors}, {"fraction", s.fraction}});
  return {{"format", "beamguard-dataset"},
          {"version", 1},
          {"camera",
           {{"width", m.camera.width},
            {"height", m.camera.height},
            {"horizontal_fov_rad", m.camera.horizontal_fov_rad}}},
          {"codebook", {{"num_antennas", m.num_antennas}, {"num_beams", m.num_beams}}},
          {"rate",
           {{"symbol_power", m.rate.symbol_power},
            {"noise_variance", m.rate.noise_variance},
            {"num_subcarriers", m.rate.num_subcarriers},
            {"subcarrier_spacing_hz", m.rate.subcarrier_spacing_hz}}},
          {"seed", m.seed},
          {"num_records", m.num_records},
          {"num_bins", m.num_bins},
          {"split_fractions",
           {{"train", m.split_fractions.train},
            {"val", m.split_fractions.val},
            {"test", m.split_fractions.test}}},
          {"split_counts",
           {{"train", m.train_count}, {"val", m.val_count}, {"test", m.test_count}}},
          {"scenarios", scenarios},
          {"target_color", m.target_color},
          {"normalization",
           {{"mean", m.mean}, {"std", m.stdev}}},
          {"config_hash", m.config_hash},
          {"compat_hash", m.compat_hash}};
}

inline DatasetManifest manifest_from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "beamguard-dataset")
    throw MissingArtifactError("not a dataset manifest");
  DatasetManifest m;
  const auto& cam = j.at("camera");
  m.camera.width = cam.at("width");
  m.camera.height = cam.at("height");
  m.camera.horizontal_fov_rad = cam.at("horizontal_fov_rad");
  m.num_antennas = j.at("codebook").at("num_antennas");
  m.num_beams = j.at("codebook").at("num_beams");
  const auto& rate = j.at("rate");
  m.rate.symbol_power = rate.at("symbol_power");
  m.rate.noise_variance = rate.at("noise_variance");
  m.rate.num_subcarriers = rate.at("num_subcarriers");
  m.rate.subcarrier_spacing_hz = rate.at("subcarrier_spacing_hz");
  m.seed = j.at("seed");
  m.num_records = j.at("num_records");
  m.num_bins = j.at("num_bins");
  m.split_fractions.train = j.at("split_fractions").at("train");
  m.split_fractions.val = j.at("split_fractions").at("val");
  m.split_fractions.test = j.at("split_fractions").at("test");
  m.train_count = j.at("split_counts").at("train");
  m.val_count = j.at("split_counts").at("val");
  m.test_count = j.at("split_counts").at("test");
  for (const auto& s : j.at("scenarios")) {
    ScenarioSpec sc;
    sc.name = s.at("name");
    sc.distractors = s.at("distractors");
    sc.fraction = s.at("fraction");
    m.scenarios.push_back(sc);
  }
  m.target_color = j.at("target_color");
  m.mean = j.at("normalization").at("mean");
  m.stdev = j.at("normalization").at("std");
  m.config_hash = j.at("config_hash");
  m.compat_hash = j.at("compat_hash");
  return m;
}

inline void save_dataset(const Dataset& ds, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(fs::path(dir) / "images");
  parallel_for(ds.records.size(), [&](size_t i) {
    const auto& r = ds.records[i];
    img::write_png_rgb8((fs::path(dir) / r.image_path).string(), r.image);
  });
  std::ofstream rec(fs::path(dir) / "records.jsonl");
  if (!rec) throw std::runtime_error("save_dataset: cannot write records.jsonl");
  for (const auto& r : ds.records) rec << record_to_json(r).dump() << "\n";
  rec.close();
  std::ofstream man(fs::path(dir) / "manifest.json");
  man << manifest_to_json(ds.manifest).dump(2) << "\n";
}

inline Dataset load_dataset(const std::string& dir, bool load_images = true) {
  namespace fs = std::filesystem;
  fs::path mp = fs::path(dir) / "manifest.json";
  if (!fs::exists(mp)) throw MissingArtifactError("no dataset manifest at " + mp.string());
  std::ifstream man(mp);
  Dataset ds;
  ds.manifest = manifest_from_json(nlohmann::json::parse(man));
  std::ifstream rec(fs::path(dir) / "records.jsonl");
  if (!rec) throw MissingArtifactError("no records.jsonl in " + dir);
  std::string line;
  while (std::getline(rec, line)) {
    if (line.empty()) continue;
    ds.records.push_back(record_from_json(nlohmann::json::parse(line)));
  }
  if (static_cast<int>(ds.records.size()) != ds.manifest.num_records)
    throw NumericError("dataset record count does not match its manifest");
  if (load_images) {
    parallel_for(ds.records.size(), [&](size_t i) {
      auto& r = ds.records[i];
      r.image = img::read_png_rgb8((fs::path(dir) / r.image_path).string());
      if (r.image.width != ds.manifest.camera.width || r.image.height != ds.manifest.camera.height)
        throw NumericError("image size mismatch for record " + r.id);
    });
  }
  return ds;
}

}  // namespace beamguard::sim
