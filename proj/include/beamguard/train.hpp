#pragma once

#include <cmath>
#include <functional>
#include <numeric>
#include <vector>

#include "beamguard/dataset.hpp"
#include "beamguard/model.hpp"

namespace beamguard::train {

struct TrainConfig {
  int batch_size = 32;
  int epochs = 30;
  double learning_rate = 1e-3;
  double lr_decay_factor = 0.1;
  int plateau_epochs = 3;
  uint64_t seed = 1;

  void validate() const {
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (epochs < 0) throw ConfigError("epochs must be >= 0");
    if (learning_rate <= 0) throw ConfigError("learning_rate must be > 0");
    if (lr_decay_factor <= 0 || lr_decay_factor > 1) throw ConfigError("lr_decay_factor in (0,1]");
  }
};

struct EpochStats {
  int epoch = 0;
  double train_loss = 0, train_top1 = 0, val_top1 = 0, lr = 0;
};

template <typename T>
Tensor<T> softmax_rows(const Tensor<T>& logits) {
  const int64_t B = logits.shape[0], L = logits.shape[1];
  Tensor<T> p(logits.shape);
  for (int64_t b = 0; b < B; b++) {
    const T* z = &logits.data[b * L];
    T* o = &p.data[b * L];
    T m = z[0];
    for (int64_t j = 1; j < L; j++) m = std::max(m, z[j]);
    double s = 0;
    for (int64_t j = 0; j < L; j++) {
      o[j] = static_cast<T>(std::exp(static_cast<double>(z[j] - m)));
      s += o[j];
    }
    for (int64_t j = 0; j < L; j++) o[j] = static_cast<T>(o[j] / s);
  }
  return p;
}

// labels are 1-based class indices; returns mean loss, writes dL/dlogits
template <typename T>
double ce_loss_and_grad(const Tensor<T>& logits, const std::vector<int>& labels,
                        Tensor<T>& dlogits) {
  const int64_t B = logits.shape[0], L = logits.shape[1];
  Tensor<T> p = softmax_rows(logits);
  dlogits = Tensor<T>(logits.shape);
  double loss = 0;
  for (int64_t b = 0; b < B; b++) {
    const int y = labels[b] - 1;
    if (y < 0 || y >= L) throw std::invalid_argument("label out of range");
    loss -= std::log(std::max(static_cast<double>(p.data[b * L + y]), 1e-30));
    for (int64_t j = 0; j < L; j++)
      dlogits.data[b * L + j] = static_cast<T>((p.data[b * L + j] - (j == y ? 1 : 0)) / B);
  }
  return loss / B;
}

template <typename T>
struct Adam {
  double lr = 1e-3, beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  int64_t t = 0;
  std::vector<Tensor<T>> m, v;

  explicit Adam(std::vector<nn::ParamRef<T>>& params, double rate) : lr(rate) {
    for (auto& p : params) {
      m.emplace_back(p.value->shape);
      v.emplace_back(p.value->shape);
    }
  }

  void step(std::vector<nn::ParamRef<T>>& params) {
    t++;
    const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t));
    const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t));
    for (size_t i = 0; i < params.size(); i++) {
      auto& val = params[i].value->data;
      auto& grd = params[i].grad->data;
      auto& mi = m[i].data;
      auto& vi = v[i].data;
      for (size_t j = 0; j < val.size(); j++) {
        const double g = grd[j];
        mi[j] = static_cast<T>(beta1 * mi[j] + (1 - beta1) * g);
        vi[j] = static_cast<T>(beta2 * vi[j] + (1 - beta2) * g * g);
        const double mh = mi[j] / c1, vh = vi[j] / c2;
        val[j] = static_cast<T>(val[j] - lr * mh / (std::sqrt(vh) + eps));
      }
    }
  }
};

template <typename T>
Tensor<T> record_batch(const std::vector<const sim::DatasetRecord*>& recs) {
  std::vector<const img::ImageU8*> images;
  images.reserve(recs.size());
  for (auto* r : recs) images.push_back(&r->image);
  return model::image_batch<T>(images);
}

using LabelFn = std::function<int(const sim::DatasetRecord&)>;

inline int beam_label_of(const sim::DatasetRecord& r) { return r.beam_label; }

template <typename T>
double split_top1(model::Model<T>& m, const std::vector<const sim::DatasetRecord*>& recs,
                  const LabelFn& label_of = beam_label_of, int batch_size = 64) {
  if (recs.empty()) throw std::invalid_argument("empty split");
  int64_t hits = 0;
  for (size_t start = 0; start < recs.size(); start += batch_size) {
    size_t end = std::min(recs.size(), start + batch_size);
    std::vector<const sim::DatasetRecord*> chunk(recs.begin() + start, recs.begin() + end);
    Tensor<T> logits = m.forward(record_batch<T>(chunk), false);
    const int64_t L = logits.shape[1];
    for (size_t b = 0; b < chunk.size(); b++) {
      int pred = model::argmax_lowest(&logits.data[b * L], L) + 1;
      if (pred == label_of(*chunk[b])) hits++;
    }
  }
  return static_cast<double>(hits) / recs.size();
}

inline std::vector<const sim::DatasetRecord*> split_records(const sim::Dataset& ds,
                                                            const std::string& split) {
  std::vector<const sim::DatasetRecord*> out;
  for (const auto& r : ds.records)
    if (r.split == split) out.push_back(&r);
  return out;
}

// loss hook: (logits, batch records, out dlogits) -> mean batch loss
template <typename T>
using LossFn = std::function<double(const Tensor<T>&, const std::vector<const sim::DatasetRecord*>&,
                                    Tensor<T>&)>;

template <typename T>
std::vector<EpochStats> fit(model::Model<T>& m, const sim::Dataset& ds, const TrainConfig& cfg,
                            const LossFn<T>& loss_fn, const LabelFn& label_of = beam_label_of) {
  cfg.validate();
  auto train_recs = split_records(ds, "train");
  auto val_recs = split_records(ds, "val");
  if (train_recs.empty()) throw ConfigError("dataset has no train split");
  if (val_recs.empty()) throw ConfigError("dataset has no val split");

  auto params = m.params();
  Adam<T> opt(params, cfg.learning_rate);
  std::vector<EpochStats> log;
  model::Model<T> best = m;
  double best_val = -1;
  int stall = 0;

  for (int epoch = 0; epoch < cfg.epochs; epoch++) {
    std::vector<size_t> order(train_recs.size());
    std::iota(order.begin(), order.end(), size_t{0});
    Rng erng(seed_mix(cfg.seed, 0xe90c + epoch));
    erng.shuffle(order);

    double loss_sum = 0;
    int64_t seen = 0, hits = 0;
    for (size_t start = 0; start < order.size(); start += cfg.batch_size) {
      size_t end = std::min(order.size(), start + cfg.batch_size);
      std::vector<const sim::DatasetRecord*> batch;
      for (size_t i = start; i < end; i++) batch.push_back(train_recs[order[i]]);
      Tensor<T> logits = m.forward(record_batch<T>(batch), true);
      Tensor<T> dlogits;
      double loss = loss_fn(logits, batch, dlogits);
      if (!std::isfinite(loss)) throw NumericError("training diverged: non-finite loss");
      loss_sum += loss * batch.size();
      seen += batch.size();
      const int64_t L = logits.shape[1];
      for (size_t b = 0; b < batch.size(); b++)
        if (model::argmax_lowest(&logits.data[b * L], L) + 1 == label_of(*batch[b])) hits++;
      m.zero_grad();
      m.backward(dlogits);
      opt.step(params);
    }

    double val_top1 = split_top1(m, val_recs, label_of);
    log.push_back({epoch, loss_sum / seen, static_cast<double>(hits) / seen, val_top1, opt.lr});
    if (val_top1 > best_val) {
      best_val = val_top1;
      best = m;
      stall = 0;
    } else if (++stall >= cfg.plateau_epochs) {
      opt.lr *= cfg.lr_decay_factor;
      stall = 0;
    }
    m.epochs_seen++;
  }

  if (cfg.epochs > 0) {
    int64_t seen = m.epochs_seen;
    auto cfg_hash = m.config_hash;
    best.epochs_seen = seen;
    best.config_hash = cfg_hash;
    m = best;
  }
  return log;
}

template <typename T>
std::vector<EpochStats> train_model(model::Model<T>& m, const sim::Dataset& ds,
                                    const TrainConfig& cfg) {
  LossFn<T> ce = [](const Tensor<T>& logits, const std::vector<const sim::DatasetRecord*>& batch,
                    Tensor<T>& dlogits) {
    std::vector<int> labels;
    for (auto* r : batch) labels.push_back(r->beam_label);
    return ce_loss_and_grad(logits, labels, dlogits);
  };
  return fit(m, ds, cfg, ce);
}

// student loss: mix*CE(hard) + (1-mix)*T^2*CE(teacher probs at T || student at T)
template <typename T>
std::vector<EpochStats> distill_train(model::Model<T>& teacher, model::Model<T>& student,
                                      const sim::Dataset& ds, const TrainConfig& cfg,
                                      double temperature = 20.0, double mix_weight = 0.3) {
  if (temperature <= 0) throw ConfigError("temperature must be > 0");
  if (mix_weight < 0 || mix_weight > 1) throw ConfigError("mix_weight in [0,1]");
  LossFn<T> loss = [&](const Tensor<T>& logits, const std::vector<const sim::DatasetRecord*>& batch,
                       Tensor<T>& dlogits) {
    const int64_t B = logits.shape[0], L = logits.shape[1];
    Tensor<T> tz = teacher.forward(record_batch<T>(batch), false);
    Tensor<T> tz_scaled(tz.shape), sz_scaled(logits.shape);
    for (size_t i = 0; i < tz.data.size(); i++) {
      tz_scaled.data[i] = static_cast<T>(tz.data[i] / temperature);
      sz_scaled.data[i] = static_cast<T>(logits.data[i] / temperature);
    }
    Tensor<T> q = softmax_rows(tz_scaled);
    Tensor<T> pt = softmax_rows(sz_scaled);
    Tensor<T> p = softmax_rows(logits);

    double hard = 0, soft = 0;
    dlogits = Tensor<T>(logits.shape);
    for (int64_t b = 0; b < B; b++) {
      const int y = batch[b]->beam_label - 1;
      hard -= std::log(std::max(static_cast<double>(p.data[b * L + y]), 1e-30));
      for (int64_t j = 0; j < L; j++) {
        const double qj = q.data[b * L + j];
        soft -= qj * std::log(std::max(static_cast<double>(pt.data[b * L + j]), 1e-30));
        double g = mix_weight * (p.data[b * L + j] - (j == y ? 1 : 0)) +
                   (1 - mix_weight) * temperature * (pt.data[b * L + j] - qj);
        dlogits.data[b * L + j] = static_cast<T>(g / B);
      }
    }
    return (mix_weight * hard + (1 - mix_weight) * temperature * temperature * soft) / B;
  };
  return fit(student, ds, cfg, loss);
}

}  // namespace beamguard::train
