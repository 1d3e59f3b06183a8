#pragma once

#include <json.hpp>

#include <fstream>

#include "beamguard/detect.hpp"
#include "beamguard/train.hpp"

namespace beamguard::attack {

struct ProxyEntry {
  const sim::DatasetRecord* rec = nullptr;
  int bin = 0;  // 1..A, from the sampled box
};

struct ProxyDataset {
  std::vector<ProxyEntry> entries;
  int num_bins = 8;
  std::string detector_mode;  // oracle | blob | largest
  uint64_t selection_seed = 0;
  double data_fraction = 0.5;
  int64_t skipped = 0;
};

inline constexpr double kMaxDataFraction = 0.5;

// spatial proxy labeling: detect, sample one box, bin its center.
// Reads only images and detections; beam labels never enter.
inline ProxyDataset build_proxy_dataset(const sim::Dataset& ds, const std::string& detector_mode,
                                        int num_bins, uint64_t seed,
                                        double data_fraction = kMaxDataFraction) {
  if (num_bins < 2) throw ConfigError("need at least 2 bins");
  if (data_fraction <= 0 || data_fraction > kMaxDataFraction)
    throw ConfigError("attacker data fraction must be in (0, 0.5]");
  if (detector_mode != "oracle" && detector_mode != "blob" && detector_mode != "largest")
    throw ConfigError("unknown detector mode: " + detector_mode);

  std::vector<size_t> order(ds.records.size());
  std::iota(order.begin(), order.end(), size_t{0});
  Rng pick(seed_mix(seed, 0xda7a));
  pick.shuffle(order);
  const size_t take = static_cast<size_t>(ds.records.size() * data_fraction);

  ProxyDataset out;
  out.num_bins = num_bins;
  out.detector_mode = detector_mode;
  out.selection_seed = seed;
  out.data_fraction = data_fraction;
  const int width = ds.manifest.camera.width;

  for (size_t t = 0; t < take; t++) {
    const auto& rec = ds.records[order[t]];
    std::vector<sim::Box> boxes = detector_mode == "blob"
                                      ? detect::detect_blob(rec.image, ds.manifest.target_color)
                                      : detect::detect_oracle(rec);
    if (boxes.empty()) {
      out.skipped++;
      continue;
    }
    size_t chosen;
    if (detector_mode == "largest") {
      chosen = 0;
      for (size_t i = 1; i < boxes.size(); i++)
        if (boxes[i].area() > boxes[chosen].area()) chosen = i;
    } else {
      Rng rng(seed_mix(seed, 0xb0c5 + order[t]));
      chosen = static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(boxes.size()) - 1));
    }
    out.entries.push_back({&rec, sim::assign_bin(boxes[chosen], width, num_bins)});
  }
  if (take > 0 && out.skipped * 2 > static_cast<int64_t>(take))
    throw NumericError("detector skipped more than half of the attacker's images");
  return out;
}

struct Surrogate {
  model::Model<float> net;
  double data_fraction = 0.5;
  std::string arch_tag;
};

// trains on bin labels with the attacker's own normalization statistics
// and an internal 90/10 split of its data share
inline Surrogate train_surrogate(const ProxyDataset& proxy, const train::TrainConfig& cfg,
                                 model::BackboneConfig arch) {
  if (proxy.entries.empty()) throw ConfigError("empty proxy dataset");
  arch.num_classes = proxy.num_bins;

  sim::Dataset view;
  view.records.reserve(proxy.entries.size());
  for (const auto& e : proxy.entries) {
    sim::DatasetRecord r = *e.rec;
    r.bin_label = e.bin;
    r.beam_label = 0;  // scrubbed: the attacker never holds beam labels
    view.records.push_back(std::move(r));
  }
  std::vector<size_t> order(view.records.size());
  std::iota(order.begin(), order.end(), size_t{0});
  Rng rng(seed_mix(cfg.seed, 0x5b17));
  rng.shuffle(order);
  const size_t n_val = std::max<size_t>(1, order.size() / 10);
  for (size_t i = 0; i < order.size(); i++)
    view.records[order[i]].split = i < order.size() - n_val ? "train" : "val";

  std::array<double, 3> mean{}, var{};
  int64_t count = 0;
  for (const auto& r : view.records) {
    if (r.split != "train") continue;
    const auto& im = r.image;
    for (int64_t i = 0; i < static_cast<int64_t>(im.rgb.size()); i += 3)
      for (int c = 0; c < 3; c++) {
        double v = im.rgb[i + c] / 255.0;
        mean[c] += v;
        var[c] += v * v;
      }
    count += im.width * im.height;
  }
  Surrogate s{model::Model<float>(arch, model::FrmConfig{}), proxy.data_fraction, arch.variant};
  for (int c = 0; c < 3; c++) {
    mean[c] /= count;
    var[c] = std::max(var[c] / count - mean[c] * mean[c], 1e-12);
    s.net.norm.mean[c] = mean[c];
    s.net.norm.stdev[c] = std::sqrt(var[c]);
  }
  s.net.init(cfg.seed);

  train::LossFn<float> ce = [](const Tensor<float>& logits,
                               const std::vector<const sim::DatasetRecord*>& batch,
                               Tensor<float>& dlogits) {
    std::vector<int> labels;
    for (auto* r : batch) labels.push_back(r->bin_label);
    return train::ce_loss_and_grad(logits, labels, dlogits);
  };
  train::fit(s.net, view, cfg, ce, [](const sim::DatasetRecord& r) { return r.bin_label; });
  return s;
}

struct Perturbation {
  Tensor<float> delta;  // (3,H,W), every entry in {-epsilon, 0, +epsilon}
  float epsilon = 0;
  std::string kind;  // universal | per_sample
  std::string source_hash;
  int batch_size = 0;
  int64_t num_batches = 0;
  std::string config_hash = "0";
  std::string compat_hash = "0";
};

template <typename T>
std::string model_param_hash(model::Model<T>& m) {
  uint64_t h = 14695981039346656037ull;
  for (auto& p : m.params())
    h = fnv1a64(p.value->data.data(), p.value->data.size() * sizeof(T), h);
  return hash_hex(h);
}

// adversarial objective: minus the mean max-class logit over the batch
template <typename T>
double adv_loss_and_grad(const Tensor<T>& logits, Tensor<T>& dlogits) {
  const int64_t B = logits.shape[0], L = logits.shape[1];
  dlogits = Tensor<T>(logits.shape);
  double loss = 0;
  for (int64_t b = 0; b < B; b++) {
    int top = model::argmax_lowest(&logits.data[b * L], L);
    loss -= logits.data[b * L + top];
    dlogits.data[b * L + top] = static_cast<T>(-1.0 / B);
  }
  return loss / B;
}

// mean over batches of the adversarial loss with a shared clipped delta
template <typename T>
double uap_loss(model::Model<T>& m, const std::vector<const img::ImageU8*>& images,
                const Tensor<T>& delta, int batch_size) {
  double total = 0;
  int64_t num_batches = 0;
  for (size_t start = 0; start < images.size(); start += batch_size) {
    size_t end = std::min(images.size(), start + batch_size);
    std::vector<const img::ImageU8*> chunk(images.begin() + start, images.begin() + end);
    Tensor<T> x = model::image_batch<T>(chunk);
    const int64_t per = delta.data.size();
    for (size_t b = 0; b < chunk.size(); b++)
      for (int64_t i = 0; i < per; i++) {
        T v = x.data[b * per + i] + delta.data[i];
        x.data[b * per + i] = std::min(T(1), std::max(T(0), v));
      }
    Tensor<T> logits = m.forward(x, false);
    Tensor<T> unused;
    total += adv_loss_and_grad(logits, unused);
    num_batches++;
  }
  return total / num_batches;
}

// accumulated gradient of the adversarial loss wrt a shared delta, evaluated
// at delta = 0 with straight-through clipping (saturated pixels contribute 0)
template <typename T>
Tensor<T> uap_mean_gradient(model::Model<T>& m, const std::vector<const img::ImageU8*>& images,
                            int batch_size, int64_t* batches_out = nullptr) {
  if (images.empty()) throw ConfigError("no images for perturbation generation");
  if (batch_size < 1) throw ConfigError("batch size must be >= 1");
  const int H = images[0]->height, W = images[0]->width;
  Tensor<double> acc({3, H, W});
  int64_t num_batches = 0;
  for (size_t start = 0; start < images.size(); start += batch_size) {
    size_t end = std::min(images.size(), start + batch_size);
    std::vector<const img::ImageU8*> chunk(images.begin() + start, images.begin() + end);
    Tensor<T> x = model::image_batch<T>(chunk);
    Tensor<T> logits = m.forward(x, false);
    Tensor<T> dlogits;
    adv_loss_and_grad(logits, dlogits);
    m.zero_grad();
    Tensor<T> dx = m.backward(dlogits);
    const int64_t per = static_cast<int64_t>(3) * H * W;
    for (size_t b = 0; b < chunk.size(); b++)
      for (int64_t i = 0; i < per; i++) {
        const T px = x.data[b * per + i];
        if (px <= T(0) || px >= T(1)) continue;
        acc.data[i] += dx.data[b * per + i];
      }
    num_batches++;
  }
  Tensor<T> g({3, H, W});
  for (size_t i = 0; i < g.data.size(); i++) {
    double v = acc.data[i] / num_batches;
    if (!std::isfinite(v)) throw NumericError("non-finite perturbation gradient");
    g.data[i] = static_cast<T>(v);
  }
  if (batches_out) *batches_out = num_batches;
  return g;
}

inline Tensor<float> sign_project(const Tensor<float>& g, float epsilon) {
  Tensor<float> d(g.shape);
  if (epsilon == 0) return d;
  for (size_t i = 0; i < g.data.size(); i++)
    d.data[i] = g.data[i] > 0 ? epsilon : (g.data[i] < 0 ? -epsilon : 0.0f);
  return d;
}

inline Perturbation generate_uap(Surrogate& s, const std::vector<const img::ImageU8*>& images,
                                 double epsilon, int batch_size = 32) {
  if (epsilon < 0) throw ConfigError("epsilon must be >= 0");
  Perturbation p;
  p.epsilon = static_cast<float>(epsilon);
  p.kind = "universal";
  p.source_hash = model_param_hash(s.net);
  p.batch_size = batch_size;
  Tensor<float> g = uap_mean_gradient(s.net, images, batch_size, &p.num_batches);
  p.delta = sign_project(g, p.epsilon);
  return p;
}

inline Perturbation fgsm_sample_attack(Surrogate& s, const img::ImageU8& image, double epsilon) {
  std::vector<const img::ImageU8*> one{&image};
  Perturbation p;
  p.epsilon = static_cast<float>(epsilon);
  p.kind = "per_sample";
  p.source_hash = model_param_hash(s.net);
  p.batch_size = 1;
  Tensor<float> g = uap_mean_gradient(s.net, one, 1, &p.num_batches);
  p.delta = sign_project(g, p.epsilon);
  return p;
}

struct NoiseSpec {
  double sigma = 0;
  uint64_t seed = 0;
  bool clip = true;
  double sigma_max = 0.05;
};

inline Tensor<float> gaussian_noise(const Tensor<float>& image, const NoiseSpec& spec) {
  if (spec.sigma < 0 || spec.sigma > spec.sigma_max)
    throw ConfigError("noise sigma outside [0, sigma_max]");
  Tensor<float> out = image;
  if (spec.sigma == 0) return out;
  Rng rng(spec.seed);
  for (auto& v : out.data) {
    v += static_cast<float>(spec.sigma * rng.normal());
    if (spec.clip) v = std::min(1.0f, std::max(0.0f, v));
  }
  return out;
}

inline Tensor<float> apply_perturbation(const Tensor<float>& image, const Perturbation& p) {
  if (image.shape != p.delta.shape) throw std::invalid_argument("perturbation shape mismatch");
  Tensor<float> out = image;
  for (size_t i = 0; i < out.data.size(); i++)
    out.data[i] = std::min(1.0f, std::max(0.0f, out.data[i] + p.delta.data[i]));
  return out;
}

// JSON header line, then the delta as little-endian f32 in HWC order
inline void save_perturbation(const Perturbation& p, const std::string& path) {
  const int64_t C = p.delta.shape[0], H = p.delta.shape[1], W = p.delta.shape[2];
  nlohmann::json h{{"format", "beamguard-perturbation"}, {"version", 1},
                   {"height", H},        {"width", W},
                   {"channels", C},      {"epsilon", p.epsilon},
                   {"kind", p.kind},     {"source_hash", p.source_hash},
                   {"batch_size", p.batch_size}, {"num_batches", p.num_batches},
                   {"config_hash", p.config_hash}, {"compat_hash", p.compat_hash}};
  std::ofstream f(path, std::ios::binary);
  if (!f) throw MissingArtifactError("cannot open for write: " + path);
  f << h.dump() << "\n";
  std::vector<float> hwc(p.delta.data.size());
  for (int64_t y = 0; y < H; y++)
    for (int64_t x = 0; x < W; x++)
      for (int64_t c = 0; c < C; c++) hwc[(y * W + x) * C + c] = p.delta(c, y, x);
  f.write(reinterpret_cast<const char*>(hwc.data()),
          static_cast<std::streamsize>(hwc.size() * sizeof(float)));
  if (!f) throw NumericError("short write: " + path);
}

inline Perturbation load_perturbation(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw MissingArtifactError("perturbation not found: " + path);
  std::string line;
  if (!std::getline(f, line)) throw ConfigError("perturbation missing header: " + path);
  nlohmann::json h;
  try {
    h = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("perturbation header is not valid JSON: " + std::string(e.what()));
  }
  if (h.value("format", "") != "beamguard-perturbation" || h.value("version", 0) != 1)
    throw ConfigError("unsupported perturbation format: " + path);
  Perturbation p;
  const int64_t H = h["height"].get<int64_t>(), W = h["width"].get<int64_t>();
  const int64_t C = h["channels"].get<int64_t>();
  p.epsilon = h["epsilon"].get<float>();
  p.kind = h["kind"].get<std::string>();
  p.source_hash = h["source_hash"].get<std::string>();
  p.batch_size = h["batch_size"].get<int>();
  p.num_batches = h["num_batches"].get<int64_t>();
  p.config_hash = h.value("config_hash", "0");
  p.compat_hash = h.value("compat_hash", "0");
  std::vector<float> hwc(static_cast<size_t>(C) * H * W);
  f.read(reinterpret_cast<char*>(hwc.data()),
         static_cast<std::streamsize>(hwc.size() * sizeof(float)));
  if (f.gcount() != static_cast<std::streamsize>(hwc.size() * sizeof(float)))
    throw ConfigError("perturbation truncated: " + path);
  p.delta = Tensor<float>({C, H, W});
  for (int64_t y = 0; y < H; y++)
    for (int64_t x = 0; x < W; x++)
      for (int64_t c = 0; c < C; c++) p.delta(c, y, x) = hwc[(y * W + x) * C + c];
  return p;
}

}  // namespace beamguard::attack
