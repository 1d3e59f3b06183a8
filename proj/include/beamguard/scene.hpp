#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "beamguard/camera.hpp"
#include "beamguard/common.hpp"
#include "beamguard/dataset.hpp"
#include "beamguard/image_io.hpp"
#include "beamguard/rf.hpp"

namespace beamguard::sim {

struct NlosParams {
  int max_paths = 2;
  double gain_min = 0.05;
  double gain_max = 0.2;  // relative to the unit line-of-sight gain
  double delay_max_ns = 200.0;
  double angle_spread_rad = 0;  // 0: anywhere in the field; >0: within +-spread of the LOS azimuth
};

struct DatasetParams {
  int num_records = 4000;
  std::vector<ScenarioSpec> scenarios{{"s0", 0, 0.25}, {"s2", 2, 0.5}, {"s4", 4, 0.25}};
  int target_size_px = 12;
  int distractor_size_min = 8;
  int distractor_size_max = 14;
  std::array<float, 3> target_color{0.85f, 0.08f, 0.08f};
  double color_margin = 0.25;  // min per-channel distance distractor vs target
  int num_bins = 8;
  NlosParams nlos;
  SplitFractions split;
};

// saturated body colors; the first entry is the canonical target red
inline const std::vector<std::array<float, 3>>& vehicle_palette() {
  static const std::vector<std::array<float, 3>> p = {
      {0.85f, 0.08f, 0.08f}, {0.20f, 0.35f, 0.80f}, {0.12f, 0.55f, 0.25f},
      {0.90f, 0.75f, 0.20f}, {0.55f, 0.20f, 0.70f}, {0.70f, 0.45f, 0.15f}};
  return p;
}

inline double color_distance(const std::array<float, 3>& a, const std::array<float, 3>& b) {
  double d = 0;
  for (int c = 0; c < 3; c++) d = std::max(d, std::abs(double(a[c]) - double(b[c])));
  return d;
}

struct SceneSpec {
  double target_center_x = 0;
  double target_center_y = 0;
  int target_size_px = 12;
  std::array<float, 3> target_color{0.85f, 0.08f, 0.08f};
  struct Placed {
    Box box;
    std::array<float, 3> color;
  };
  std::vector<Placed> distractors;
  uint64_t background_seed = 0;
};

// rasterization of the continuous target center; drawn center stays within
// half a pixel of the sampled one
inline Box target_box(const SceneSpec& s) {
  int x0 = static_cast<int>(std::floor(s.target_center_x - s.target_size_px / 2.0 + 0.5));
  int y0 = static_cast<int>(std::floor(s.target_center_y - s.target_size_px / 2.0 + 0.5));
  return Box{x0, y0, x0 + s.target_size_px, y0 + s.target_size_px};
}

namespace detail {

inline bool touches(const Box& a, const Box& b, int gap) {
  return !(a.x_max + gap <= b.x_min || b.x_max + gap <= a.x_min || a.y_max + gap <= b.y_min ||
           b.y_max + gap <= a.y_min);
}

inline int road_top(const CameraModel& cam) {
  return static_cast<int>(std::floor(0.45 * cam.height));
}

inline double speckle(uint64_t seed, int x, int y) {
  uint64_t h = seed_mix(seed, static_cast<uint64_t>(x), static_cast<uint64_t>(y));
  return 2.0 * (static_cast<double>(h >> 11) * 0x1.0p-53) - 1.0;  // [-1, 1)
}

}  // namespace detail

inline SceneSpec sample_scene(Rng& rng, const ScenarioSpec& scenario, const DatasetParams& p,
                              const CameraModel& cam) {
  if (p.target_size_px < 2 || p.target_size_px > cam.height / 2)
    throw ConfigError("sample_scene: unusable target size");
  SceneSpec s;
  s.target_size_px = p.target_size_px;
  s.target_color = p.target_color;
  double half = p.target_size_px / 2.0;
  s.target_center_x = rng.uniform(half, cam.width - half);
  int top = detail::road_top(cam);
  s.target_center_y = rng.uniform(top + half, cam.height - half);
  s.background_seed = rng.bits();

  std::vector<std::array<float, 3>> colors;
  for (size_t i = 1; i < vehicle_palette().size(); i++)
    if (color_distance(vehicle_palette()[i], p.target_color) >= p.color_margin)
      colors.push_back(vehicle_palette()[i]);
  if (scenario.distractors > 0 && colors.empty())
    throw ConfigError("sample_scene: no distractor color clears the margin");

  Box tb = target_box(s);
  for (int d = 0; d < scenario.distractors; d++) {
    for (int attempt = 0;; attempt++) {
      int size = static_cast<int>(rng.uniform_int(p.distractor_size_min, p.distractor_size_max));
      int x0 = static_cast<int>(rng.uniform_int(0, cam.width - size));
      int y0 = static_cast<int>(rng.uniform_int(top, cam.height - size));
      Box b{x0, y0, x0 + size, y0 + size};
      bool clear = !detail::touches(b, tb, 1);
      for (const auto& o : s.distractors)
        if (detail::touches(b, o.box, 1)) clear = false;
      if (clear || attempt >= 200) {
        auto color = colors[static_cast<size_t>(rng.uniform_int(0, colors.size() - 1))];
        s.distractors.push_back({b, color});
        break;
      }
    }
  }
  return s;
}

inline img::ImageU8 render_scene(const SceneSpec& s, const CameraModel& cam) {
  Box tb = target_box(s);
  if (tb.x_min < 0 || tb.y_min < 0 || tb.x_max > cam.width || tb.y_max > cam.height)
    throw std::invalid_argument("render_scene: target leaves the frame");
  img::ImageU8 im(cam.width, cam.height);
  int horizon = static_cast<int>(std::floor(0.42 * cam.height));
  int lane_y = static_cast<int>(std::floor(0.74 * cam.height));
  for (int y = 0; y < cam.height; y++) {
    for (int x = 0; x < cam.width; x++) {
      double base[3];
      double amp;
      if (y < horizon) {
        double t = horizon > 0 ? static_cast<double>(y) / horizon : 0.0;
        base[0] = 0.55 + t * 0.17;
        base[1] = 0.62 + t * 0.14;
        base[2] = 0.72 + t * 0.10;
        amp = 0.012;
      } else {
        double t = static_cast<double>(y - horizon) / std::max(1, cam.height - horizon);
        base[0] = 0.35 - t * 0.13;
        base[1] = 0.35 - t * 0.13;
        base[2] = 0.36 - t * 0.13;
        amp = 0.03;
      }
      if ((y == lane_y || y == lane_y + 1) && (x / 6) % 2 == 0) {
        base[0] = 0.80;
        base[1] = 0.80;
        base[2] = 0.76;
        amp = 0.010;
      }
      double n = amp * detail::speckle(s.background_seed, x, y);
      uint8_t* px = im.pixel(x, y);
      for (int c = 0; c < 3; c++) px[c] = img::quantize_u8(base[c] + n);
    }
  }
  auto fill = [&](const Box& b, const std::array<float, 3>& color) {
    uint8_t q[3];
    for (int c = 0; c < 3; c++) q[c] = img::quantize_u8(color[c]);
    for (int y = std::max(0, b.y_min); y < std::min(cam.height, b.y_max); y++)
      for (int x = std::max(0, b.x_min); x < std::min(cam.width, b.x_max); x++) {
        uint8_t* px = im.pixel(x, y);
        px[0] = q[0];
        px[1] = q[1];
        px[2] = q[2];
      }
  };
  for (const auto& d : s.distractors) fill(d.box, d.color);
  fill(tb, s.target_color);  // target drawn last, always fully visible
  return im;
}

// per-scenario shuffled assignment with cumulative rounding, so every split
// count is within one record of the exact fraction
inline void split_dataset(std::vector<DatasetRecord>& records, const SplitFractions& f,
                          uint64_t seed) {
  if (std::abs(f.train + f.val + f.test - 1.0) > 1e-9)
    throw ConfigError("split_dataset: fractions must sum to 1");
  std::vector<std::string> scenario_order;
  for (const auto& r : records)
    if (std::find(scenario_order.begin(), scenario_order.end(), r.scenario_id) ==
        scenario_order.end())
      scenario_order.push_back(r.scenario_id);
  for (size_t s = 0; s < scenario_order.size(); s++) {
    std::vector<size_t> idx;
    for (size_t i = 0; i < records.size(); i++)
      if (records[i].scenario_id == scenario_order[s]) idx.push_back(i);
    Rng rng(seed_mix(seed, s));
    rng.shuffle(idx);
    auto n = static_cast<double>(idx.size());
    size_t n_train = static_cast<size_t>(std::llround(n * f.train));
    size_t n_val = static_cast<size_t>(std::llround(n * (f.train + f.val))) - n_train;
    for (size_t k = 0; k < idx.size(); k++)
      records[idx[k]].split = k < n_train ? "train" : k < n_train + n_val ? "val" : "test";
  }
}

struct GenParams {
  DatasetParams dataset;
  CameraModel camera;
  int num_antennas = 16;
  int num_beams = 16;
  rf::RateParams rate;
  uint64_t seed = 123;
  std::string config_hash = "0";
  std::string compat_hash = "0";
};

inline Dataset generate_dataset(const GenParams& gp) {
  const auto& p = gp.dataset;
  if (p.num_records < 1) throw ConfigError("generate_dataset: need at least one record");
  if (p.scenarios.empty()) throw ConfigError("generate_dataset: no scenarios configured");
  double frac_sum = 0;
  for (const auto& s : p.scenarios) frac_sum += s.fraction;
  if (std::abs(frac_sum - 1.0) > 1e-9)
    throw ConfigError("generate_dataset: scenario fractions must sum to 1");

  // contiguous scenario blocks sized by cumulative rounding
  std::vector<size_t> scenario_of(static_cast<size_t>(p.num_records));
  {
    double cum = 0;
    size_t start = 0;
    for (size_t s = 0; s < p.scenarios.size(); s++) {
      cum += p.scenarios[s].fraction;
      size_t end = s + 1 == p.scenarios.size()
                       ? static_cast<size_t>(p.num_records)
                       : static_cast<size_t>(std::llround(p.num_records * cum));
      for (size_t i = start; i < end; i++) scenario_of[i] = s;
      start = end;
    }
  }

  auto cb = rf::build_codebook(gp.num_antennas, gp.num_beams);
  Dataset ds;
  ds.records.resize(static_cast<size_t>(p.num_records));
  parallel_chunks(ds.records.size(), 64, [&](size_t, size_t b, size_t e) {
    for (size_t i = b; i < e; i++) {
      Rng rng(seed_mix(gp.seed, i));
      const auto& scenario = p.scenarios[scenario_of[i]];
      SceneSpec spec = sample_scene(rng, scenario, p, gp.camera);
      DatasetRecord& r = ds.records[i];
      char idbuf[16];
      std::snprintf(idbuf, sizeof idbuf, "%06zu", i);
      r.id = idbuf;
      r.image_path = std::string("images/") + idbuf + ".png";
      r.scenario_id = scenario.name;
      r.image = render_scene(spec, gp.camera);
      r.target_bbox = target_box(spec);
      for (const auto& d : spec.distractors) r.distractor_boxes.push_back(d.box);
      r.azimuth_rad = azimuth_from_pixel(gp.camera, r.target_bbox.center_x());
      r.bin_label = assign_bin(r.target_bbox, gp.camera.width, p.num_bins);
      r.los = rf::PathSpec{1.0, r.azimuth_rad, 0.0, 0.0};
      int n_paths = static_cast<int>(rng.uniform_int(0, p.nlos.max_paths));
      for (int k = 0; k < n_paths; k++) {
        rf::PathSpec path;
        path.gain = std::polar(rng.uniform(p.nlos.gain_min, p.nlos.gain_max),
                               rng.uniform(0, 2 * M_PI));
        if (p.nlos.angle_spread_rad > 0) {
          double s = p.nlos.angle_spread_rad;
          path.azimuth_rad = std::clamp(r.azimuth_rad + rng.uniform(-s, s), -1.4, 1.4);
        } else {
          path.azimuth_rad = rng.uniform(-1.4, 1.4);
        }
        path.delay_s = rng.uniform(0, p.nlos.delay_max_ns) * 1e-9;
        r.nlos.push_back(path);
      }
      auto ch = rf::synthesize_channel(r.los, r.nlos, gp.rate.num_subcarriers, gp.num_antennas,
                                       gp.rate.subcarrier_spacing_hz);
      r.beam_label = rf::optimal_beam_index(ch, cb, gp.rate);
    }
  });

  split_dataset(ds.records, p.split, seed_mix(gp.seed, 0x5917));

  DatasetManifest& m = ds.manifest;
  m.camera = gp.camera;
  m.num_antennas = gp.num_antennas;
  m.num_beams = gp.num_beams;
  m.rate = gp.rate;
  m.seed = gp.seed;
  m.num_records = p.num_records;
  m.num_bins = p.num_bins;
  m.split_fractions = p.split;
  m.scenarios = p.scenarios;
  m.target_color = p.target_color;
  m.config_hash = gp.config_hash;
  m.compat_hash = gp.compat_hash;
  for (const auto& r : ds.records) {
    if (r.split == "train")
      m.train_count++;
    else if (r.split == "val")
      m.val_count++;
    else
      m.test_count++;
  }
  // dataset-wide per-channel statistics over the canonical k/255 pixels
  double sum[3] = {0, 0, 0}, sumsq[3] = {0, 0, 0};
  for (const auto& r : ds.records)
    for (int c = 0; c < 3; c++)
      for (int y = 0; y < r.image.height; y++)
        for (int x = 0; x < r.image.width; x++) {
          double v = r.image.pixel(x, y)[c] / 255.0;
          sum[c] += v;
          sumsq[c] += v * v;
        }
  double n_px = static_cast<double>(ds.records.size()) * gp.camera.width * gp.camera.height;
  for (int c = 0; c < 3; c++) {
    m.mean[c] = sum[c] / n_px;
    double var = sumsq[c] / n_px - m.mean[c] * m.mean[c];
    m.stdev[c] = std::sqrt(std::max(var, 1e-12));
  }
  return ds;
}

}  // namespace beamguard::sim
