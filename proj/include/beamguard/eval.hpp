#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "beamguard/attack.hpp"
#include "beamguard/plot.hpp"

namespace beamguard::eval {

struct AttackGrid {
  std::vector<double> epsilons{0.02, 0.03, 0.04, 0.05};
  std::vector<double> sigmas{0.01, 0.015, 0.02, 0.025};
  std::vector<int> topk{1, 2, 3, 5};

  void validate() const {
    if (epsilons.size() != sigmas.size())
      throw ConfigError("attack grid: epsilon and sigma lists must pair by index");
    for (size_t j = 0; j < epsilons.size(); j++) {
      if (!(epsilons[j] > 0) || !(sigmas[j] > 0))
        throw ConfigError("attack grid: budgets must be positive");
      double matched = 2.0 * sigmas[j];
      if (std::abs(epsilons[j] - matched) > 0.1 * matched + 1e-12)
        throw ConfigError("attack grid: epsilon must stay within 10% of twice sigma");
    }
    if (topk.empty()) throw ConfigError("attack grid: need at least one k");
    for (size_t i = 0; i < topk.size(); i++) {
      if (topk[i] < 1) throw ConfigError("attack grid: k must be positive");
      if (i > 0 && topk[i] <= topk[i - 1])
        throw ConfigError("attack grid: k values must strictly increase");
    }
  }
};

inline std::string fmt_budget(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", v);
  return buf;
}

inline std::string noise_condition(double sigma) { return "noise@" + fmt_budget(sigma); }
inline std::string adv_condition(double eps) { return "adv@" + fmt_budget(eps); }

// rank with ties broken toward the lowest index: the label is inside the top k
// iff fewer than k entries rank strictly ahead of it
inline bool topk_contains(const float* logits, int n, int label_1based, int k) {
  if (label_1based < 1 || label_1based > n) throw ConfigError("top-k: label outside class range");
  if (k < 1 || k > n) throw ConfigError("top-k: k outside [1, num_classes]");
  int idx = label_1based - 1;
  int ahead = 0;
  for (int j = 0; j < n; j++) {
    if (logits[j] > logits[idx] || (logits[j] == logits[idx] && j < idx)) ahead++;
  }
  return ahead < k;
}

using LogitsFn = std::function<std::vector<float>(const sim::DatasetRecord&)>;

inline double topk_accuracy_fn(const LogitsFn& fn,
                               const std::vector<const sim::DatasetRecord*>& recs, int k) {
  if (recs.empty()) throw ConfigError("top-k accuracy: empty record set");
  int64_t hits = 0;
  for (const auto* r : recs) {
    std::vector<float> lg = fn(*r);
    if (topk_contains(lg.data(), static_cast<int>(lg.size()), r->beam_label, k)) hits++;
  }
  return static_cast<double>(hits) / static_cast<double>(recs.size());
}

// forward a record list in batches; tweak edits each (3,H,W) image in place and
// receives the record's position so noise can be seeded per record
inline std::vector<std::vector<float>> batched_logits(
    model::Model<float>& m, const std::vector<const sim::DatasetRecord*>& recs,
    const std::function<void(size_t, Tensor<float>&)>& tweak = nullptr, int batch_size = 64) {
  if (recs.empty()) throw ConfigError("batched_logits: empty record set");
  std::vector<std::vector<float>> rows(recs.size());
  for (size_t at = 0; at < recs.size(); at += static_cast<size_t>(batch_size)) {
    size_t n = std::min(recs.size() - at, static_cast<size_t>(batch_size));
    const auto& first = recs[at]->image;
    if (first.rgb.empty()) throw MissingArtifactError("record has no pixel data");
    Tensor<float> x({static_cast<int64_t>(n), 3, first.height, first.width});
    size_t plane = static_cast<size_t>(3) * first.height * first.width;
    for (size_t i = 0; i < n; i++) {
      const auto& im = recs[at + i]->image;
      if (im.rgb.empty()) throw MissingArtifactError("record has no pixel data");
      if (im.width != first.width || im.height != first.height)
        throw ConfigError("batched_logits: image sizes differ");
      Tensor<float> chw = img::to_float(im);
      if (tweak) tweak(at + i, chw);
      std::copy(chw.data.begin(), chw.data.end(), x.data.begin() + i * plane);
    }
    Tensor<float> lg = m.forward(x, false);
    int64_t L = lg.shape[1];
    for (size_t i = 0; i < n; i++)
      rows[at + i].assign(lg.data.begin() + static_cast<int64_t>(i) * L,
                          lg.data.begin() + static_cast<int64_t>(i + 1) * L);
  }
  return rows;
}

inline double topk_accuracy(model::Model<float>& m,
                            const std::vector<const sim::DatasetRecord*>& recs, int k,
                            const attack::Perturbation* pert = nullptr) {
  std::function<void(size_t, Tensor<float>&)> tweak = nullptr;
  if (pert) tweak = [&](size_t, Tensor<float>& chw) { chw = attack::apply_perturbation(chw, *pert); };
  auto rows = batched_logits(m, recs, tweak);
  int64_t hits = 0;
  for (size_t i = 0; i < recs.size(); i++)
    if (topk_contains(rows[i].data(), static_cast<int>(rows[i].size()), recs[i]->beam_label, k))
      hits++;
  return static_cast<double>(hits) / static_cast<double>(recs.size());
}

struct RateImpact {
  int count = 0;
  double attack_epsilon = 0;
  double mean_rate_oracle = 0;
  double mean_rate_clean = 0;
  double mean_rate_attacked = 0;
  double rate_min = 0;  // min_fraction of the oracle mean
  double min_fraction = 0.5;
  double violation_fraction_clean = 0;
  double violation_fraction_attacked = 0;
  bool mean_attacked_meets_min = true;
};

inline RateImpact rate_impact_core(const std::vector<const sim::DatasetRecord*>& recs,
                                   const std::vector<int>& clean_choice,
                                   const std::vector<int>& attacked_choice,
                                   const rf::BeamCodebook& cb, const rf::RateParams& rp,
                                   double min_fraction = 0.5, double attack_epsilon = 0) {
  if (recs.empty()) throw ConfigError("rate impact: empty record set");
  if (clean_choice.size() != recs.size() || attacked_choice.size() != recs.size())
    throw ConfigError("rate impact: one beam choice per record required");
  RateImpact out;
  out.count = static_cast<int>(recs.size());
  out.attack_epsilon = attack_epsilon;
  out.min_fraction = min_fraction;
  std::vector<double> clean_rates(recs.size()), attacked_rates(recs.size());
  double sum_oracle = 0, sum_clean = 0, sum_attacked = 0;
  for (size_t i = 0; i < recs.size(); i++) {
    const auto& r = *recs[i];
    rf::ChannelState ch = rf::synthesize_channel(r.los, r.nlos, rp.num_subcarriers,
                                                 cb.num_antennas, rp.subcarrier_spacing_hz);
    sum_oracle += rf::beam_rate(ch, cb, r.beam_label, rp);
    clean_rates[i] = rf::beam_rate(ch, cb, clean_choice[i], rp);
    attacked_rates[i] = rf::beam_rate(ch, cb, attacked_choice[i], rp);
    sum_clean += clean_rates[i];
    sum_attacked += attacked_rates[i];
  }
  out.mean_rate_oracle = sum_oracle / out.count;
  out.mean_rate_clean = sum_clean / out.count;
  out.mean_rate_attacked = sum_attacked / out.count;
  out.rate_min = min_fraction * out.mean_rate_oracle;
  int viol_clean = 0, viol_attacked = 0;
  for (size_t i = 0; i < recs.size(); i++) {
    if (clean_rates[i] < out.rate_min) viol_clean++;
    if (attacked_rates[i] < out.rate_min) viol_attacked++;
  }
  out.violation_fraction_clean = static_cast<double>(viol_clean) / out.count;
  out.violation_fraction_attacked = static_cast<double>(viol_attacked) / out.count;
  out.mean_attacked_meets_min = out.mean_rate_attacked >= out.rate_min;
  return out;
}

inline std::vector<int> predicted_beams(const std::vector<std::vector<float>>& rows) {
  std::vector<int> out(rows.size());
  for (size_t i = 0; i < rows.size(); i++)
    out[i] = model::argmax_lowest(rows[i].data(), static_cast<int64_t>(rows[i].size())) + 1;
  return out;
}

inline RateImpact rate_impact_report(model::Model<float>& m,
                                     const std::vector<const sim::DatasetRecord*>& recs,
                                     const rf::BeamCodebook& cb, const rf::RateParams& rp,
                                     const attack::Perturbation* pert = nullptr,
                                     double min_fraction = 0.5) {
  auto clean = predicted_beams(batched_logits(m, recs));
  std::vector<int> attacked = clean;
  double eps = 0;
  if (pert) {
    auto tweak = [&](size_t, Tensor<float>& chw) { chw = attack::apply_perturbation(chw, *pert); };
    attacked = predicted_beams(batched_logits(m, recs, tweak));
    eps = pert->epsilon;
  }
  return rate_impact_core(recs, clean, attacked, cb, rp, min_fraction, eps);
}

struct EvalReport {
  AttackGrid grid;
  std::vector<uint64_t> noise_seeds;
  std::vector<std::string> models;
  std::vector<std::string> scenarios;  // dataset order, then "overall"
  std::map<std::string, int> counts;   // test records per scenario
  // accuracy[model][scenario][condition][k]
  std::map<std::string, std::map<std::string, std::map<std::string, std::map<int, double>>>>
      accuracy;
  std::map<std::string, RateImpact> rate;
};

inline EvalReport evaluate_grid(
    const std::vector<std::pair<std::string, model::Model<float>*>>& models,
    const sim::Dataset& ds, const AttackGrid& grid,
    const std::map<double, attack::Perturbation>& perturbations,
    const std::vector<uint64_t>& noise_seeds) {
  grid.validate();
  for (double e : grid.epsilons)
    if (!perturbations.count(e))
      throw MissingArtifactError("no universal perturbation for epsilon " + fmt_budget(e));
  if (!grid.sigmas.empty() && noise_seeds.empty())
    throw ConfigError("evaluate_grid: noise conditions need at least one seed");
  if (models.empty()) throw ConfigError("evaluate_grid: no models");

  auto test = train::split_records(ds, "test");
  if (test.empty()) throw ConfigError("evaluate_grid: empty test split");

  EvalReport rep;
  rep.grid = grid;
  rep.noise_seeds = noise_seeds;
  for (const auto& s : ds.manifest.scenarios) rep.scenarios.push_back(s.name);
  rep.scenarios.push_back("overall");
  for (const auto* r : test) rep.counts[r->scenario_id]++;
  rep.counts["overall"] = static_cast<int>(test.size());

  for (const auto& [name, mp] : models) {
    rep.models.push_back(name);
    auto& acc = rep.accuracy[name];

    auto add_rows = [&](const std::string& cond, const std::vector<std::vector<float>>& rows,
                        double weight) {
      std::map<std::string, std::map<int, int64_t>> hits;
      for (size_t i = 0; i < test.size(); i++) {
        int n = static_cast<int>(rows[i].size());
        for (int k : grid.topk) {
          int hit = topk_contains(rows[i].data(), n, test[i]->beam_label, k) ? 1 : 0;
          hits[test[i]->scenario_id][k] += hit;
          hits["overall"][k] += hit;
        }
      }
      for (const auto& scen : rep.scenarios) {
        int cnt = rep.counts.count(scen) ? rep.counts[scen] : 0;
        if (cnt == 0) continue;
        for (int k : grid.topk)
          acc[scen][cond][k] += weight * static_cast<double>(hits[scen][k]) / cnt;
      }
    };

    auto clean_rows = batched_logits(*mp, test);
    add_rows("clean", clean_rows, 1.0);

    for (double sigma : grid.sigmas) {
      for (uint64_t seed : noise_seeds) {
        auto tweak = [&](size_t i, Tensor<float>& chw) {
          attack::NoiseSpec spec;
          spec.sigma = sigma;
          spec.seed = seed_mix(seed, 0x6e50 + static_cast<uint64_t>(i));
          chw = attack::gaussian_noise(chw, spec);
        };
        add_rows(noise_condition(sigma), batched_logits(*mp, test, tweak),
                 1.0 / static_cast<double>(noise_seeds.size()));
      }
    }

    std::vector<std::vector<float>> last_adv_rows;
    for (double eps : grid.epsilons) {
      const attack::Perturbation& pert = perturbations.at(eps);
      auto tweak = [&](size_t, Tensor<float>& chw) {
        chw = attack::apply_perturbation(chw, pert);
      };
      last_adv_rows = batched_logits(*mp, test, tweak);
      add_rows(adv_condition(eps), last_adv_rows, 1.0);
    }

    rf::BeamCodebook cb = rf::build_codebook(ds.manifest.num_antennas, ds.manifest.num_beams);
    auto clean_choice = predicted_beams(clean_rows);
    auto attacked_choice = grid.epsilons.empty() ? clean_choice : predicted_beams(last_adv_rows);
    double eps = grid.epsilons.empty() ? 0.0 : grid.epsilons.back();
    rep.rate[name] = rate_impact_core(test, clean_choice, attacked_choice, cb,
                                      ds.manifest.rate, 0.5, eps);
  }
  return rep;
}

struct DegradationMatrix {
  std::vector<int> topk;                    // rows
  std::vector<double> epsilons, sigmas;     // paired columns
  std::vector<std::vector<double>> values;  // acc_noise - acc_adv
  std::string orientation = "positive = adversarial stronger";
};

inline DegradationMatrix degradation_diff(const EvalReport& rep, const std::string& model,
                                          const std::string& scenario = "overall") {
  rep.grid.validate();
  if (rep.grid.epsilons.empty()) throw ConfigError("degradation_diff: no paired budgets");
  auto mit = rep.accuracy.find(model);
  if (mit == rep.accuracy.end()) throw ConfigError("degradation_diff: unknown model " + model);
  auto sit = mit->second.find(scenario);
  if (sit == mit->second.end())
    throw ConfigError("degradation_diff: unknown scenario " + scenario);
  const auto& conds = sit->second;

  auto cell = [&](const std::string& cond, int k) {
    auto cit = conds.find(cond);
    if (cit == conds.end()) throw ConfigError("degradation_diff: missing condition " + cond);
    auto kit = cit->second.find(k);
    if (kit == cit->second.end())
      throw ConfigError("degradation_diff: missing k=" + std::to_string(k));
    return kit->second;
  };

  DegradationMatrix dm;
  dm.topk = rep.grid.topk;
  dm.epsilons = rep.grid.epsilons;
  dm.sigmas = rep.grid.sigmas;
  for (int k : dm.topk) {
    std::vector<double> row;
    for (size_t j = 0; j < dm.epsilons.size(); j++) {
      double noise = cell(noise_condition(dm.sigmas[j]), k);
      double adv = cell(adv_condition(dm.epsilons[j]), k);
      row.push_back(noise - adv);
    }
    dm.values.push_back(std::move(row));
  }
  return dm;
}

struct LogitRecord {
  std::string id;
  int true_label = 0;
  int predicted_clean = 0;
  int predicted_perturbed = 0;
  std::vector<float> clean;
  std::vector<float> perturbed;
  std::string condition;
};

inline std::vector<LogitRecord> export_logits_fn(const LogitsFn& clean_fn,
                                                 const LogitsFn& pert_fn,
                                                 const std::vector<const sim::DatasetRecord*>& recs,
                                                 const std::string& condition) {
  std::vector<LogitRecord> out;
  out.reserve(recs.size());
  for (const auto* r : recs) {
    LogitRecord lr;
    lr.id = r->id;
    lr.true_label = r->beam_label;
    lr.clean = clean_fn(*r);
    lr.perturbed = pert_fn(*r);
    lr.condition = condition;
    for (float v : lr.clean)
      if (!std::isfinite(v)) throw NumericError("non-finite logit for record " + r->id);
    for (float v : lr.perturbed)
      if (!std::isfinite(v)) throw NumericError("non-finite logit for record " + r->id);
    lr.predicted_clean =
        model::argmax_lowest(lr.clean.data(), static_cast<int64_t>(lr.clean.size())) + 1;
    lr.predicted_perturbed =
        model::argmax_lowest(lr.perturbed.data(), static_cast<int64_t>(lr.perturbed.size())) + 1;
    out.push_back(std::move(lr));
  }
  return out;
}

inline std::vector<LogitRecord> export_logits(model::Model<float>& m,
                                              const std::vector<const sim::DatasetRecord*>& recs,
                                              const attack::Perturbation* pert = nullptr) {
  auto clean_rows = batched_logits(m, recs);
  auto pert_rows = clean_rows;
  std::string condition = "clean";
  if (pert) {
    auto tweak = [&](size_t, Tensor<float>& chw) { chw = attack::apply_perturbation(chw, *pert); };
    pert_rows = batched_logits(m, recs, tweak);
    condition = adv_condition(pert->epsilon);
  }
  std::vector<LogitRecord> out;
  out.reserve(recs.size());
  for (size_t i = 0; i < recs.size(); i++) {
    LogitRecord lr;
    lr.id = recs[i]->id;
    lr.true_label = recs[i]->beam_label;
    lr.clean = clean_rows[i];
    lr.perturbed = pert_rows[i];
    lr.condition = condition;
    for (float v : lr.clean)
      if (!std::isfinite(v)) throw NumericError("non-finite logit for record " + lr.id);
    for (float v : lr.perturbed)
      if (!std::isfinite(v)) throw NumericError("non-finite logit for record " + lr.id);
    lr.predicted_clean =
        model::argmax_lowest(lr.clean.data(), static_cast<int64_t>(lr.clean.size())) + 1;
    lr.predicted_perturbed =
        model::argmax_lowest(lr.perturbed.data(), static_cast<int64_t>(lr.perturbed.size())) + 1;
    out.push_back(std::move(lr));
  }
  return out;
}

inline double mean_max_logit(const std::vector<LogitRecord>& recs, bool perturbed) {
  if (recs.empty()) throw ConfigError("mean_max_logit: no records");
  double acc = 0;
  for (const auto& r : recs) {
    const auto& v = perturbed ? r.perturbed : r.clean;
    acc += *std::max_element(v.begin(), v.end());
  }
  return acc / static_cast<double>(recs.size());
}

namespace detail {

inline nlohmann::json rate_to_json(const RateImpact& ri) {
  return {{"count", ri.count},
          {"attack_epsilon", ri.attack_epsilon},
          {"mean_rate_oracle", ri.mean_rate_oracle},
          {"mean_rate_clean", ri.mean_rate_clean},
          {"mean_rate_attacked", ri.mean_rate_attacked},
          {"rate_min", ri.rate_min},
          {"min_fraction", ri.min_fraction},
          {"violation_fraction_clean", ri.violation_fraction_clean},
          {"violation_fraction_attacked", ri.violation_fraction_attacked},
          {"mean_attacked_meets_min", ri.mean_attacked_meets_min}};
}

inline std::string safe_name(const std::string& s) {
  std::string out;
  for (char c : s)
    out += (std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_') ? c : '_';
  return out;
}

}  // namespace detail

inline nlohmann::json report_to_json(const EvalReport& rep,
                                     const std::map<std::string, std::string>& metadata = {}) {
  nlohmann::json j;
  j["format"] = "beamguard-report";
  j["version"] = 1;
  j["grid"] = {{"epsilons", rep.grid.epsilons},
               {"sigmas", rep.grid.sigmas},
               {"topk", rep.grid.topk}};
  j["noise_seeds"] = rep.noise_seeds;
  j["counts"] = rep.counts;
  j["metadata"] = metadata;
  j["reference_full_scale"] = {
      {"note", "published full-scale result kept for orientation, not reproduced at this scale"},
      {"top3_eps0.05_scenario2_degradation_difference", 0.689}};
  nlohmann::json models = nlohmann::json::object();
  for (const auto& name : rep.models) {
    nlohmann::json mj;
    nlohmann::json accj = nlohmann::json::object();
    for (const auto& [scen, conds] : rep.accuracy.at(name)) {
      nlohmann::json sj = nlohmann::json::object();
      for (const auto& [cond, ks] : conds) {
        nlohmann::json kj = nlohmann::json::object();
        for (const auto& [k, v] : ks) kj[std::to_string(k)] = v;
        sj[cond] = kj;
      }
      accj[scen] = sj;
    }
    mj["accuracy"] = accj;
    if (!rep.grid.epsilons.empty()) {
      DegradationMatrix dm = degradation_diff(rep, name);
      mj["degradation_difference"] = {{"orientation", dm.orientation},
                                      {"rows_topk", dm.topk},
                                      {"cols_epsilon", dm.epsilons},
                                      {"cols_sigma", dm.sigmas},
                                      {"values", dm.values}};
    }
    if (rep.rate.count(name)) mj["rate_impact"] = detail::rate_to_json(rep.rate.at(name));
    models[name] = mj;
  }
  j["models"] = models;
  return j;
}

inline void write_logits_jsonl(const std::map<std::string, std::vector<LogitRecord>>& by_model,
                               const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot open " + path);
  for (const auto& [model_name, recs] : by_model) {
    for (const auto& r : recs) {
      nlohmann::json j{{"model", model_name},
                       {"id", r.id},
                       {"condition", r.condition},
                       {"true", r.true_label},
                       {"pred_clean", r.predicted_clean},
                       {"pred_perturbed", r.predicted_perturbed},
                       {"clean", r.clean},
                       {"perturbed", r.perturbed}};
      out << j.dump() << "\n";
    }
  }
}

inline void write_grid_csv(const EvalReport& rep, const std::string& model,
                           const std::string& path, const std::string& scenario = "overall") {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot open " + path);
  const auto& conds = rep.accuracy.at(model).at(scenario);
  char buf[64];
  out << "k,clean";
  for (size_t j = 0; j < rep.grid.epsilons.size(); j++)
    out << "," << noise_condition(rep.grid.sigmas[j]) << "," << adv_condition(rep.grid.epsilons[j])
        << ",diff@" << fmt_budget(rep.grid.epsilons[j]);
  out << "\n";
  for (int k : rep.grid.topk) {
    std::snprintf(buf, sizeof(buf), "%d,%.6f", k, conds.at("clean").at(k));
    out << buf;
    for (size_t j = 0; j < rep.grid.epsilons.size(); j++) {
      double noise = conds.at(noise_condition(rep.grid.sigmas[j])).at(k);
      double adv = conds.at(adv_condition(rep.grid.epsilons[j])).at(k);
      std::snprintf(buf, sizeof(buf), ",%.6f,%.6f,%.6f", noise, adv, noise - adv);
      out << buf;
    }
    out << "\n";
  }
}

// report.json + tables/*.csv + figures/*.png + logits.jsonl, all paths relative
inline void write_report_bundle(const EvalReport& rep,
                                const std::map<std::string, std::vector<LogitRecord>>& logits,
                                const std::string& out_dir,
                                const std::map<std::string, std::string>& metadata = {}) {
  namespace fs = std::filesystem;
  fs::create_directories(fs::path(out_dir) / "tables");
  fs::create_directories(fs::path(out_dir) / "figures");

  {
    std::ofstream out((fs::path(out_dir) / "report.json").string(), std::ios::binary);
    if (!out) throw ConfigError("cannot open report.json under " + out_dir);
    out << report_to_json(rep, metadata).dump(2) << "\n";
  }

  for (const auto& name : rep.models) {
    std::string stem = detail::safe_name(name);
    write_grid_csv(rep, name, (fs::path(out_dir) / "tables" / (stem + "_grid.csv")).string());
    if (!rep.grid.epsilons.empty()) {
      DegradationMatrix dm = degradation_diff(rep, name);
      std::vector<std::string> row_labels, col_labels;
      for (int k : dm.topk) row_labels.push_back("TOP-" + std::to_string(k));
      for (size_t j = 0; j < dm.epsilons.size(); j++)
        col_labels.push_back("E" + fmt_budget(dm.epsilons[j]));
      img::ImageU8 hm = plot::render_heatmap(dm.values, row_labels, col_labels,
                                             stem + " NOISE-ADV ACCURACY",
                                             "POSITIVE = ADVERSARIAL STRONGER");
      img::write_png_rgb8((fs::path(out_dir) / "figures" / (stem + "_degradation.png")).string(),
                          hm);
    }
    auto lit = logits.find(name);
    if (lit != logits.end() && !lit->second.empty()) {
      plot::HistSeries clean_s{"CLEAN", {}}, pert_s{lit->second.front().condition, {}};
      for (const auto& r : lit->second) {
        clean_s.values.push_back(*std::max_element(r.clean.begin(), r.clean.end()));
        pert_s.values.push_back(*std::max_element(r.perturbed.begin(), r.perturbed.end()));
      }
      img::ImageU8 h = plot::render_histogram({clean_s, pert_s}, 24, stem + " MAX LOGIT");
      img::write_png_rgb8((fs::path(out_dir) / "figures" / (stem + "_max_logit_hist.png")).string(),
                          h);
    }
  }
  write_logits_jsonl(logits, (fs::path(out_dir) / "logits.jsonl").string());
}

}  // namespace beamguard::eval
