#pragma once

#include <algorithm>
#include <array>
#include <string>
#include <vector>

#include "beamguard/image_io.hpp"
#include "beamguard/nn.hpp"

namespace beamguard::model {

struct BackboneConfig {
  std::string variant = "mini_residual";  // or mini_plain (no skip connections)
  std::vector<int> stage_channels{16, 32, 64};
  int input_h = 64, input_w = 64;
  int num_classes = 16;

  void validate() const {
    if (variant != "mini_residual" && variant != "mini_plain")
      throw ConfigError("unknown backbone variant: " + variant);
    if (stage_channels.size() < 2) throw ConfigError("backbone needs at least 2 stages");
    for (int c : stage_channels)
      if (c < 1) throw ConfigError("stage channels must be positive");
    if (input_h < 4 || input_w < 4) throw ConfigError("input size too small");
    // stem halves once, every stage halves once more
    int64_t h = input_h >> 1, w = input_w >> 1;
    for (size_t i = 0; i < stage_channels.size(); i++) {
      h >>= 1;
      w >>= 1;
    }
    if (h < 1 || w < 1) throw ConfigError("too many stages for the input size");
    if (num_classes < 2) throw ConfigError("need at least 2 classes");
  }
};

struct FrmConfig {
  bool enabled = false;
  int bottleneck_channels = 32;  // k
  int depth = 3;                 // total conv layers

  void validate(int feature_channels) const {
    if (!enabled) return;
    if (depth < 2) throw ConfigError("refinement depth must be >= 2");
    if (bottleneck_channels < 1 || bottleneck_channels > feature_channels)
      throw ConfigError("bottleneck channels out of range");
  }
};

template <typename T>
struct Stage {
  bool residual = true;
  nn::Conv2d<T> down;
  nn::BatchNorm2d<T> down_bn;
  nn::ReLU<T> down_relu;
  nn::Conv2d<T> c1;
  nn::BatchNorm2d<T> bn1;
  nn::ReLU<T> r1;
  nn::Conv2d<T> c2;
  nn::BatchNorm2d<T> bn2;
  nn::ReLU<T> r2;

  Stage() = default;
  Stage(int cin, int cout, bool res)
      : residual(res),
        down(cin, cout, 3, 2, 1),
        down_bn(cout),
        c1(cout, cout, 3, 1, 1),
        bn1(cout),
        c2(cout, cout, 3, 1, 1),
        bn2(cout) {}

  void init(Rng& rng) {
    down.init(rng);
    c1.init(rng);
    c2.init(rng);
  }

  Tensor<T> forward(const Tensor<T>& x, bool train) {
    Tensor<T> h = down_relu.forward(down_bn.forward(down.forward(x), train));
    Tensor<T> y = bn2.forward(c2.forward(r1.forward(bn1.forward(c1.forward(h), train))), train);
    if (residual) y += h;
    return r2.forward(y);
  }

  Tensor<T> backward(const Tensor<T>& dout) {
    Tensor<T> d = r2.backward(dout);
    Tensor<T> dh = c1.backward(bn1.backward(r1.backward(c2.backward(bn2.backward(d)))));
    if (residual) dh += d;
    return down.backward(down_bn.backward(down_relu.backward(dh)));
  }

  void collect(const std::string& p, std::vector<nn::ParamRef<T>>& out) {
    down.collect(p + ".down", out);
    down_bn.collect(p + ".down_bn", out);
    c1.collect(p + ".c1", out);
    bn1.collect(p + ".bn1", out);
    c2.collect(p + ".c2", out);
    bn2.collect(p + ".bn2", out);
  }
};

template <typename T>
struct Frm {
  FrmConfig cfg;
  int feature_channels = 0;
  std::vector<nn::Conv2d<T>> convs;      // depth entries: C->k, k->k ..., k->C
  std::vector<nn::BatchNorm2d<T>> bns;   // depth-2 entries, layers 2..depth-1
  std::vector<nn::ReLU<T>> relus;        // depth-1 entries

  Frm() = default;
  Frm(const FrmConfig& c, int C) : cfg(c), feature_channels(C) {
    cfg.validate(C);
    if (!cfg.enabled) return;
    const int k = cfg.bottleneck_channels;
    convs.emplace_back(C, k, 3, 1, 1);
    for (int l = 1; l + 1 < cfg.depth; l++) {
      convs.emplace_back(k, k, 3, 1, 1);
      bns.emplace_back(k);
    }
    convs.emplace_back(k, C, 3, 1, 1);
    relus.resize(cfg.depth - 1);
  }

  void init(Rng& rng) {
    if (!cfg.enabled) return;
    for (size_t i = 0; i + 1 < convs.size(); i++) convs[i].init(rng);
    // final layer starts at zero so refinement begins as identity
    convs.back().weight.zero();
    convs.back().bias.zero();
  }

  Tensor<T> forward(const Tensor<T>& f, bool train) {
    Tensor<T> h = relus[0].forward(convs[0].forward(f));
    for (int l = 1; l + 1 < cfg.depth; l++)
      h = relus[l].forward(bns[l - 1].forward(convs[l].forward(h), train));
    return convs.back().forward(h);
  }

  Tensor<T> backward(const Tensor<T>& dout) {
    Tensor<T> d = convs.back().backward(dout);
    for (int l = cfg.depth - 2; l >= 1; l--)
      d = convs[l].backward(bns[l - 1].backward(relus[l].backward(d)));
    return convs[0].backward(relus[0].backward(d));
  }

  void collect(std::vector<nn::ParamRef<T>>& out) {
    if (!cfg.enabled) return;
    for (size_t i = 0; i < convs.size(); i++)
      convs[i].collect("frm.c" + std::to_string(i), out);
    for (size_t i = 0; i < bns.size(); i++) bns[i].collect("frm.bn" + std::to_string(i), out);
  }
};

template <typename T>
struct Model {
  BackboneConfig backbone;
  FrmConfig frm_cfg;
  nn::NormalizeInput<T> norm;
  uint64_t seed = 0;
  int64_t epochs_seen = 0;
  std::string config_hash = "0", compat_hash = "0";

  nn::Conv2d<T> stem;
  nn::BatchNorm2d<T> stem_bn;
  nn::ReLU<T> stem_relu;
  std::vector<Stage<T>> stages;
  Frm<T> frm;
  nn::GlobalAvgPool<T> gap;
  nn::Linear<T> head;

  Tensor<T> feat_cache;      // backbone output of last forward
  std::vector<int64_t> raw_shape;

  Model() = default;
  Model(const BackboneConfig& b, const FrmConfig& f) : backbone(b), frm_cfg(f) {
    backbone.validate();
    const auto& ch = backbone.stage_channels;
    stem = nn::Conv2d<T>(3, ch[0], 3, 2, 1);
    stem_bn = nn::BatchNorm2d<T>(ch[0]);
    bool res = backbone.variant == "mini_residual";
    for (size_t i = 0; i < ch.size(); i++)
      stages.emplace_back(i == 0 ? ch[0] : ch[i - 1], ch[i], res);
    frm = Frm<T>(f, ch.back());
    head = nn::Linear<T>(ch.back(), backbone.num_classes);
  }

  void init(uint64_t init_seed) {
    seed = init_seed;
    Rng rng(seed_mix(init_seed, 0x1717));
    stem.init(rng);
    for (auto& s : stages) s.init(rng);
    frm.init(rng);
    head.init(rng);
  }

  int feature_channels() const { return backbone.stage_channels.back(); }

  std::vector<nn::ParamRef<T>> params() {
    std::vector<nn::ParamRef<T>> out;
    stem.collect("stem", out);
    stem_bn.collect("stem_bn", out);
    for (size_t i = 0; i < stages.size(); i++) stages[i].collect("s" + std::to_string(i), out);
    frm.collect(out);
    head.collect("head", out);
    return out;
  }

  std::vector<nn::ParamRef<T>> buffers() {
    std::vector<nn::ParamRef<T>> out;
    auto add = [&](const std::string& p, nn::BatchNorm2d<T>& bn) {
      out.push_back({p + ".rm", &bn.running_mean, nullptr});
      out.push_back({p + ".rv", &bn.running_var, nullptr});
    };
    add("stem_bn", stem_bn);
    for (size_t i = 0; i < stages.size(); i++) {
      std::string p = "s" + std::to_string(i);
      add(p + ".down_bn", stages[i].down_bn);
      add(p + ".bn1", stages[i].bn1);
      add(p + ".bn2", stages[i].bn2);
    }
    for (size_t i = 0; i < frm.bns.size(); i++) add("frm.bn" + std::to_string(i), frm.bns[i]);
    return out;
  }

  int64_t param_count() {
    int64_t n = 0;
    for (auto& p : params()) n += static_cast<int64_t>(p.value->data.size());
    return n;
  }

  void zero_grad() {
    for (auto& p : params()) p.grad->zero();
  }

  // raw pixel batch (B,3,H,W) in [0,1] -> backbone feature maps
  Tensor<T> features_from_raw(const Tensor<T>& raw, bool train) {
    raw_shape = raw.shape;
    Tensor<T> x = nn::resize_bilinear(raw, backbone.input_h, backbone.input_w);
    x = norm.forward(x);
    x = stem_relu.forward(stem_bn.forward(stem.forward(x), train));
    for (auto& s : stages) x = s.forward(x, train);
    return x;
  }

  Tensor<T> refine(const Tensor<T>& feat, bool train) {
    if (!frm_cfg.enabled) return feat;
    Tensor<T> r = frm.forward(feat, train);
    Tensor<T> out = feat;
    for (size_t i = 0; i < out.data.size(); i++) out.data[i] -= r.data[i];
    return out;
  }

  Tensor<T> forward(const Tensor<T>& raw, bool train) {
    feat_cache = features_from_raw(raw, train);
    Tensor<T> refined = refine(feat_cache, train);
    return head.forward(gap.forward(refined));
  }

  // gradient wrt the raw input batch; accumulates parameter grads
  Tensor<T> backward(const Tensor<T>& dlogits) {
    Tensor<T> d = gap.backward(head.backward(dlogits));
    if (frm_cfg.enabled) {
      Tensor<T> dr = d;
      for (auto& v : dr.data) v = -v;
      Tensor<T> through = frm.backward(dr);
      d += through;
    }
    for (auto it = stages.rbegin(); it != stages.rend(); ++it) d = it->backward(d);
    d = stem.backward(stem_bn.backward(stem_relu.backward(d)));
    d = norm.backward(d);
    return nn::resize_bilinear_backward(d, raw_shape[2], raw_shape[3]);
  }
};

template <typename T>
Tensor<T> extract_features(Model<T>& m, const Tensor<T>& normalized, bool train = false) {
  Tensor<T> x = m.stem_relu.forward(m.stem_bn.forward(m.stem.forward(normalized), train));
  for (auto& s : m.stages) x = s.forward(x, train);
  return x;
}

template <typename T>
Tensor<T> frm_forward(Model<T>& m, const Tensor<T>& features, bool train = false) {
  if (!m.frm_cfg.enabled) throw ConfigError("refinement module disabled");
  return m.frm.forward(features, train);
}

template <typename T>
Tensor<T> refine_features(Model<T>& m, const Tensor<T>& features, bool train = false) {
  return m.refine(features, train);
}

template <typename T>
Tensor<T> classify_logits(Model<T>& m, const Tensor<T>& raw_batch, bool train = false) {
  return m.forward(raw_batch, train);
}

template <typename T>
int argmax_lowest(const T* v, int64_t n) {
  int best = 0;
  for (int64_t i = 1; i < n; i++)
    if (v[i] > v[best]) best = static_cast<int>(i);
  return best;
}

template <typename T>
Tensor<T> image_batch(const std::vector<const img::ImageU8*>& images) {
  if (images.empty()) throw std::invalid_argument("empty batch");
  const int H = images[0]->height, W = images[0]->width;
  Tensor<T> out({static_cast<int64_t>(images.size()), 3, H, W});
  for (size_t b = 0; b < images.size(); b++) {
    auto f = img::to_float(*images[b]);
    std::copy(f.data.begin(), f.data.end(), out.data.begin() + b * 3 * H * W);
  }
  return out;
}

// 1-based beam index, lowest-index tie break
template <typename T>
int predict_beam(Model<T>& m, const img::ImageU8& image) {
  std::vector<const img::ImageU8*> one{&image};
  Tensor<T> logits = m.forward(image_batch<T>(one), false);
  return argmax_lowest(logits.data.data(), logits.shape[1]) + 1;
}

}  // namespace beamguard::model
