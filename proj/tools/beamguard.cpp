#include <CLI11.hpp>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "beamguard/checkpoint.hpp"
#include "beamguard/config.hpp"

namespace fs = std::filesystem;
using namespace beamguard;

namespace {

void require_absent(const fs::path& p, bool force) {
  if (!force && fs::exists(p))
    throw ConfigError("refusing to overwrite " + p.string() + " (pass --force)");
}

void ensure_parent(const fs::path& p) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
}

void check_compat(const std::string& artifact, const std::string& artifact_hash,
                  const std::string& expected) {
  if (artifact_hash != expected)
    throw ConfigError(artifact + " was built under a different codebook/camera config (compat " +
                      artifact_hash + ", dataset " + expected + ")");
}

struct Flags {
  std::string config_file;
  bool force = false;

  std::string out, data, surrogate, teacher, record_id, report_in;
  std::vector<std::string> model_specs, pert_paths;
  std::string mode, frm_switch;
  std::optional<int> n, epochs;
  std::optional<uint64_t> seed;
  std::optional<double> epsilon;
  std::optional<int> bins;
  std::optional<double> data_fraction;
};

config::RunConfig effective_config(const Flags& f, const std::string& subcommand) {
  return config::load_run_config(f.config_file, [&](nlohmann::json& j) {
    if (f.n) j["dataset"]["num_records"] = *f.n;
    if (f.epochs) j["train"]["epochs"] = *f.epochs;
    if (f.seed) {
      if (subcommand == "gen-data") j["seeds"]["data"] = *f.seed;
      else if (subcommand == "attack") j["seeds"]["attack"] = *f.seed;
      else j["seeds"]["train"] = *f.seed;
    }
    if (!f.frm_switch.empty()) j["frm"]["enabled"] = (f.frm_switch == "on");
    if (f.epsilon) j["attack"]["epsilon"] = *f.epsilon;
    if (f.bins) j["attack"]["bins"] = *f.bins;
    if (f.data_fraction) j["attack"]["data_fraction"] = *f.data_fraction;
  });
}

int cmd_gen_data(const Flags& f) {
  auto cfg = effective_config(f, "gen-data");
  fs::path out = f.out.empty() ? cfg.paths.data : f.out;
  require_absent(out / "records.jsonl", f.force);
  auto ds = sim::generate_dataset(cfg.gen);
  sim::save_dataset(ds, out.string());
  std::printf("wrote %d records to %s (train %d / val %d / test %d)\n", ds.manifest.num_records,
              out.string().c_str(), ds.manifest.train_count, ds.manifest.val_count,
              ds.manifest.test_count);
  return 0;
}

int cmd_train(const Flags& f) {
  auto cfg = effective_config(f, "train");
  fs::path data = f.data.empty() ? cfg.paths.data : f.data;
  fs::path out = f.out.empty() ? fs::path(cfg.paths.models) / "model.ckpt" : fs::path(f.out);
  require_absent(out, f.force);

  auto ds = sim::load_dataset(data.string());
  check_compat("dataset " + data.string(), ds.manifest.compat_hash, cfg.compat_hash);

  model::BackboneConfig arch = cfg.arch;
  arch.num_classes = ds.manifest.num_beams;
  arch.input_h = ds.manifest.camera.height;
  arch.input_w = ds.manifest.camera.width;

  model::Model<float> m(arch, cfg.frm);
  m.norm.mean = ds.manifest.mean;
  m.norm.stdev = ds.manifest.stdev;
  m.init(cfg.train_cfg.seed);

  std::vector<train::EpochStats> log;
  if (!f.teacher.empty()) {
    auto teacher = ckpt::load_checkpoint(f.teacher);
    check_compat("teacher " + f.teacher, teacher.compat_hash, ds.manifest.compat_hash);
    log = train::distill_train(teacher, m, ds, cfg.train_cfg, cfg.distill_temperature,
                               cfg.distill_mix);
  } else {
    log = train::train_model(m, ds, cfg.train_cfg);
  }

  m.config_hash = cfg.config_hash;
  m.compat_hash = ds.manifest.compat_hash;
  ensure_parent(out);
  ckpt::save_checkpoint(m, out.string());

  std::ofstream csv(out.string() + ".metrics.csv", std::ios::binary);
  csv << "epoch,train_loss,train_top1,val_top1,lr\n";
  char buf[128];
  for (const auto& e : log) {
    std::snprintf(buf, sizeof(buf), "%d,%.6f,%.6f,%.6f,%.8f\n", e.epoch, e.train_loss,
                  e.train_top1, e.val_top1, e.lr);
    csv << buf;
  }
  double final_val = log.empty() ? 0.0 : log.back().val_top1;
  std::printf("wrote %s after %d epochs (last val top-1 %.4f)\n", out.string().c_str(),
              static_cast<int>(log.size()), final_val);
  return 0;
}

int cmd_attack(const Flags& f) {
  auto cfg = effective_config(f, "attack");
  fs::path data = f.data.empty() ? cfg.paths.data : f.data;
  auto ds = sim::load_dataset(data.string());
  check_compat("dataset " + data.string(), ds.manifest.compat_hash, cfg.compat_hash);

  if (f.mode == "proxy-train") {
    fs::path out =
        f.out.empty() ? fs::path(cfg.paths.attacks) / "surrogate.ckpt" : fs::path(f.out);
    require_absent(out, f.force);
    auto proxy = attack::build_proxy_dataset(ds, cfg.atk.detector, cfg.atk.bins,
                                             cfg.seeds.attack, cfg.atk.data_fraction);
    model::BackboneConfig arch = cfg.atk.surrogate;
    arch.input_h = ds.manifest.camera.height;
    arch.input_w = ds.manifest.camera.width;
    auto s = attack::train_surrogate(proxy, cfg.atk.train_cfg, arch);
    s.net.config_hash = cfg.config_hash;
    s.net.compat_hash = ds.manifest.compat_hash;
    ensure_parent(out);
    ckpt::save_checkpoint(s.net, out.string());
    nlohmann::json meta{{"detector", proxy.detector_mode},
                        {"bins", proxy.num_bins},
                        {"data_fraction", proxy.data_fraction},
                        {"selection_seed", proxy.selection_seed},
                        {"proxy_records", proxy.entries.size()},
                        {"skipped", proxy.skipped}};
    std::ofstream mf(out.string() + ".meta.json", std::ios::binary);
    mf << meta.dump(2) << "\n";
    std::printf("wrote %s (surrogate over %zu proxy-labeled records, %d bins)\n",
                out.string().c_str(), proxy.entries.size(), proxy.num_bins);
    return 0;
  }

  fs::path surrogate_path =
      f.surrogate.empty() ? fs::path(cfg.paths.attacks) / "surrogate.ckpt" : fs::path(f.surrogate);
  attack::Surrogate s{ckpt::load_checkpoint(surrogate_path.string()),
                      cfg.atk.data_fraction, cfg.atk.surrogate.variant};
  check_compat("surrogate " + surrogate_path.string(), s.net.compat_hash,
               ds.manifest.compat_hash);
  double eps = cfg.atk.epsilon;

  if (f.mode == "gen-uap") {
    char stem[64];
    std::snprintf(stem, sizeof(stem), "uap_eps%g.pert", eps);
    fs::path out = f.out.empty() ? fs::path(cfg.paths.attacks) / stem : fs::path(f.out);
    require_absent(out, f.force);
    // the attacker's image pool is its own proxy selection, replayed from seeds
    auto proxy = attack::build_proxy_dataset(ds, cfg.atk.detector, cfg.atk.bins,
                                             cfg.seeds.attack, cfg.atk.data_fraction);
    std::vector<const img::ImageU8*> images;
    for (const auto& e : proxy.entries) images.push_back(&e.rec->image);
    auto pert = attack::generate_uap(s, images, eps, cfg.atk.batch_size);
    pert.config_hash = cfg.config_hash;
    pert.compat_hash = ds.manifest.compat_hash;
    ensure_parent(out);
    attack::save_perturbation(pert, out.string());
    std::printf("wrote %s (universal, epsilon %g, %lld batches of %d)\n", out.string().c_str(),
                eps, static_cast<long long>(pert.num_batches), pert.batch_size);
    return 0;
  }

  if (f.mode == "per-sample") {
    const sim::DatasetRecord* rec = nullptr;
    if (f.record_id.empty()) {
      for (const auto& r : ds.records)
        if (r.split == "test") {
          rec = &r;
          break;
        }
    } else {
      for (const auto& r : ds.records)
        if (r.id == f.record_id) {
          rec = &r;
          break;
        }
    }
    if (!rec) throw MissingArtifactError("record not found: " + f.record_id);
    char stem[96];
    std::snprintf(stem, sizeof(stem), "persample_%s_eps%g.pert", rec->id.c_str(), eps);
    fs::path out = f.out.empty() ? fs::path(cfg.paths.attacks) / stem : fs::path(f.out);
    require_absent(out, f.force);
    auto pert = attack::fgsm_sample_attack(s, rec->image, eps);
    pert.config_hash = cfg.config_hash;
    pert.compat_hash = ds.manifest.compat_hash;
    ensure_parent(out);
    attack::save_perturbation(pert, out.string());
    std::printf("wrote %s (per-sample, record %s, epsilon %g)\n", out.string().c_str(),
                rec->id.c_str(), eps);
    return 0;
  }

  throw ConfigError("attack --mode must be proxy-train, gen-uap, or per-sample");
}

int cmd_eval(const Flags& f) {
  auto cfg = effective_config(f, "eval");
  fs::path data = f.data.empty() ? cfg.paths.data : f.data;
  fs::path out = f.out.empty() ? cfg.paths.reports : f.out;

  std::vector<std::pair<std::string, std::string>> model_files;
  for (const auto& spec : f.model_specs) {
    auto eq = spec.find('=');
    if (eq == std::string::npos || eq == 0 || eq + 1 == spec.size())
      throw ConfigError("--model expects name=path, got '" + spec + "'");
    model_files.emplace_back(spec.substr(0, eq), spec.substr(eq + 1));
  }
  if (model_files.empty())
    model_files.emplace_back("baseline", (fs::path(cfg.paths.models) / "model.ckpt").string());

  // list every missing artifact before giving up
  std::vector<std::string> missing;
  if (!fs::exists(data / "manifest.json")) missing.push_back((data / "manifest.json").string());
  for (const auto& [name, path] : model_files)
    if (!fs::exists(path)) missing.push_back(path);
  for (const auto& p : f.pert_paths)
    if (!fs::exists(p)) missing.push_back(p);
  if (!missing.empty()) {
    std::string all;
    for (const auto& m : missing) all += "\n  " + m;
    throw MissingArtifactError("missing artifacts:" + all);
  }

  require_absent(out / "report.json", f.force);

  auto ds = sim::load_dataset(data.string());
  check_compat("dataset " + data.string(), ds.manifest.compat_hash, cfg.compat_hash);

  std::vector<model::Model<float>> loaded;
  loaded.reserve(model_files.size());
  std::vector<std::pair<std::string, model::Model<float>*>> models;
  for (const auto& [name, path] : model_files) {
    loaded.push_back(ckpt::load_checkpoint(path));
    check_compat("checkpoint " + path, loaded.back().compat_hash, ds.manifest.compat_hash);
    models.emplace_back(name, &loaded.back());
  }

  std::map<double, attack::Perturbation> perts;
  for (const auto& p : f.pert_paths) {
    auto pert = attack::load_perturbation(p);
    check_compat("perturbation " + p, pert.compat_hash, ds.manifest.compat_hash);
    if (pert.kind != "universal")
      throw ConfigError("grid evaluation expects universal perturbations, got " + pert.kind +
                        " from " + p);
    bool matched = false;
    for (double ge : cfg.grid.epsilons)
      if (std::abs(static_cast<double>(pert.epsilon) - ge) <= 1e-6) {
        perts[ge] = std::move(pert);
        matched = true;
        break;
      }
    if (!matched)
      throw ConfigError("perturbation " + p + " carries epsilon " +
                        eval::fmt_budget(pert.epsilon) + " which is not on the grid");
  }
  std::vector<std::string> uncovered;
  for (double ge : cfg.grid.epsilons)
    if (!perts.count(ge)) uncovered.push_back(eval::fmt_budget(ge));
  if (!uncovered.empty()) {
    std::string all;
    for (const auto& u : uncovered) all += " " + u;
    throw MissingArtifactError("no universal perturbation supplied for epsilon:" + all);
  }

  auto rep = eval::evaluate_grid(models, ds, cfg.grid, perts, cfg.seeds.noise);

  auto test = train::split_records(ds, "test");
  if (cfg.logit_records > 0 && static_cast<int>(test.size()) > cfg.logit_records)
    test.resize(static_cast<size_t>(cfg.logit_records));
  const attack::Perturbation* worst =
      cfg.grid.epsilons.empty() ? nullptr : &perts.at(cfg.grid.epsilons.back());
  std::map<std::string, std::vector<eval::LogitRecord>> logits;
  for (auto& [name, mp] : models) logits[name] = eval::export_logits(*mp, test, worst);

  eval::write_report_bundle(rep, logits, out.string(),
                            {{"config_hash", cfg.config_hash},
                             {"compat_hash", ds.manifest.compat_hash}});
  std::printf("wrote %s for %zu model(s) over %d test records\n",
              (out / "report.json").string().c_str(), models.size(),
              rep.counts.at("overall"));
  return 0;
}

int cmd_report(const Flags& f) {
  fs::path in = f.report_in.empty() ? fs::path("reports") / "report.json" : fs::path(f.report_in);
  std::ifstream file(in);
  if (!file) throw MissingArtifactError("report not found: " + in.string());
  nlohmann::json j;
  try {
    file >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("cannot parse " + in.string() + ": " + e.what());
  }
  if (j.value("format", "") != "beamguard-report")
    throw ConfigError(in.string() + " is not a report bundle");

  const auto& grid = j.at("grid");
  std::printf("report %s\n", in.string().c_str());
  std::printf("  grid: %zu budget pair(s), top-k", grid.at("epsilons").size());
  for (const auto& k : grid.at("topk")) std::printf(" %d", k.get<int>());
  std::printf("\n");
  for (const auto& [name, mj] : j.at("models").items()) {
    const auto& overall = mj.at("accuracy").at("overall");
    std::printf("  %s:\n", name.c_str());
    for (const auto& [cond, ks] : overall.items()) {
      std::printf("    %-12s", cond.c_str());
      for (const auto& [k, v] : ks.items())
        std::printf("  top-%s %.4f", k.c_str(), v.get<double>());
      std::printf("\n");
    }
    if (mj.contains("rate_impact")) {
      const auto& ri = mj.at("rate_impact");
      std::printf("    rate: oracle %.4f, clean %.4f, attacked %.4f (min %.4f, viol %.3f)\n",
                  ri.at("mean_rate_oracle").get<double>(), ri.at("mean_rate_clean").get<double>(),
                  ri.at("mean_rate_attacked").get<double>(), ri.at("rate_min").get<double>(),
                  ri.at("violation_fraction_attacked").get<double>());
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  if (const char* t = std::getenv("BEAMGUARD_THREADS")) {
    int n = std::atoi(t);
    if (n > 0) Eigen::setNbThreads(n);
  }

  CLI::App app{"vision-aided beam selection workbench"};
  app.require_subcommand(1);
  Flags f;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", f.config_file, "JSON config file (flags win over file values)");
    sub->add_flag("--force", f.force, "overwrite existing artifacts");
  };

  auto* gen = app.add_subcommand("gen-data", "render scenes and synthesize channels");
  add_common(gen);
  gen->add_option("--out", f.out, "dataset directory");
  gen->add_option("--n", f.n, "record count override");
  gen->add_option("--seed", f.seed, "dataset seed override");

  auto* tr = app.add_subcommand("train", "train a beam classifier");
  add_common(tr);
  tr->add_option("--data", f.data, "dataset directory");
  tr->add_option("--out", f.out, "checkpoint path");
  tr->add_option("--frm", f.frm_switch, "feature refinement on|off")
      ->check(CLI::IsMember({"on", "off"}));
  tr->add_option("--distill", f.teacher, "teacher checkpoint for distillation");
  tr->add_option("--epochs", f.epochs, "epoch count override");
  tr->add_option("--seed", f.seed, "training seed override");

  auto* atk = app.add_subcommand("attack", "proxy labeling, surrogates, perturbations");
  add_common(atk);
  atk->add_option("--mode", f.mode, "proxy-train | gen-uap | per-sample")
      ->required()
      ->check(CLI::IsMember({"proxy-train", "gen-uap", "per-sample"}));
  atk->add_option("--data", f.data, "dataset directory");
  atk->add_option("--out", f.out, "artifact path");
  atk->add_option("--surrogate", f.surrogate, "surrogate checkpoint (gen-uap, per-sample)");
  atk->add_option("--epsilon", f.epsilon, "perturbation budget override");
  atk->add_option("--bins", f.bins, "spatial bin count override");
  atk->add_option("--data-fraction", f.data_fraction, "attacker data share override");
  atk->add_option("--record", f.record_id, "record id (per-sample mode)");
  atk->add_option("--seed", f.seed, "attack seed override");

  auto* ev = app.add_subcommand("eval", "accuracy grid, rate impact, report bundle");
  add_common(ev);
  ev->add_option("--data", f.data, "dataset directory");
  ev->add_option("--out", f.out, "report directory");
  ev->add_option("--model", f.model_specs, "name=checkpoint (repeatable)");
  ev->add_option("--pert", f.pert_paths, "universal perturbation file (repeatable)");

  auto* rep = app.add_subcommand("report", "print a saved report bundle");
  rep->add_option("--in", f.report_in, "report.json path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (gen->parsed()) return cmd_gen_data(f);
    if (tr->parsed()) return cmd_train(f);
    if (atk->parsed()) return cmd_attack(f);
    if (ev->parsed()) return cmd_eval(f);
    if (rep->parsed()) return cmd_report(f);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const MissingArtifactError& e) {
    std::fprintf(stderr, "missing artifact: %s\n", e.what());
    return 3;
  } catch (const NumericError& e) {
    std::fprintf(stderr, "numeric failure: %s\n", e.what());
    return 4;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const std::domain_error& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const nlohmann::json::exception& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
