#include <catch2/catch_amalgamated.hpp>

#include <unistd.h>

#include <filesystem>
#include <fstream>

#include "beamguard/attack.hpp"
#include "beamguard/scene.hpp"

using namespace beamguard;
namespace fs = std::filesystem;

namespace {

sim::GenParams gen_params(int n, std::vector<sim::ScenarioSpec> scenarios, uint64_t seed) {
  sim::GenParams gp;
  gp.dataset.num_records = n;
  gp.dataset.scenarios = std::move(scenarios);
  gp.seed = seed;
  return gp;
}

const sim::Dataset& mixed_dataset() {
  static sim::Dataset ds = sim::generate_dataset(
      gen_params(2400, {{"s0", 0, 0.25}, {"s2", 2, 0.5}, {"s4", 4, 0.25}}, 901));
  return ds;
}

const sim::Dataset& single_dataset() {
  static sim::Dataset ds = sim::generate_dataset(gen_params(1400, {{"s0", 0, 1.0}}, 902));
  return ds;
}

model::BackboneConfig surrogate_arch(std::vector<int> stages = {16, 32}) {
  model::BackboneConfig arch;
  arch.variant = "mini_plain";
  arch.stage_channels = std::move(stages);
  return arch;
}

// accuracy of the surrogate against freshly sampled proxy labels
double proxy_accuracy(attack::Surrogate& s, const attack::ProxyDataset& proxy,
                      const attack::Perturbation* pert = nullptr) {
  int hits = 0;
  for (const auto& e : proxy.entries) {
    Tensor<float> x = model::image_batch<float>({&e.rec->image});
    if (pert) {
      Tensor<float> one({3, e.rec->image.height, e.rec->image.width});
      std::copy(x.data.begin(), x.data.end(), one.data.begin());
      auto adv = attack::apply_perturbation(one, *pert);
      std::copy(adv.data.begin(), adv.data.end(), x.data.begin());
    }
    Tensor<float> logits = s.net.forward(x, false);
    if (model::argmax_lowest(logits.data.data(), logits.shape[1]) + 1 == e.bin) hits++;
  }
  return static_cast<double>(hits) / proxy.entries.size();
}

attack::Surrogate& trained_surrogate() {
  static attack::Surrogate s = [] {
    auto proxy = attack::build_proxy_dataset(mixed_dataset(), "oracle", 8, 41, 0.5);
    train::TrainConfig cfg;
    cfg.epochs = 12;
    cfg.seed = 7;
    return attack::train_surrogate(proxy, cfg, surrogate_arch());
  }();
  return s;
}

std::vector<const img::ImageU8*> record_images(const sim::Dataset& ds, size_t limit) {
  std::vector<const img::ImageU8*> out;
  for (const auto& r : ds.records) {
    out.push_back(&r.image);
    if (out.size() == limit) break;
  }
  return out;
}

std::string tmp_file(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("beamguard_atk_" + std::to_string(getpid()));
  fs::create_directories(dir);
  return (dir / name).string();
}

}  // namespace

TEST_CASE("proxy dataset construction") {
  const auto& ds = mixed_dataset();

  SECTION("same seed gives an identical dataset") {
    auto a = attack::build_proxy_dataset(ds, "oracle", 8, 5, 0.4);
    auto b = attack::build_proxy_dataset(ds, "oracle", 8, 5, 0.4);
    REQUIRE(a.entries.size() == b.entries.size());
    for (size_t i = 0; i < a.entries.size(); i++) {
      CHECK(a.entries[i].rec == b.entries[i].rec);
      CHECK(a.entries[i].bin == b.entries[i].bin);
    }
  }

  SECTION("respects the data fraction cap") {
    CHECK_THROWS_AS(attack::build_proxy_dataset(ds, "oracle", 8, 5, 0.6), ConfigError);
    CHECK_THROWS_AS(attack::build_proxy_dataset(ds, "oracle", 8, 5, 0.0), ConfigError);
    auto p = attack::build_proxy_dataset(ds, "oracle", 8, 5, 0.25);
    CHECK(p.entries.size() + p.skipped == static_cast<size_t>(ds.records.size() * 0.25));
  }

  SECTION("single-vehicle scenes always label the target bin") {
    const auto& solo = single_dataset();
    auto p = attack::build_proxy_dataset(solo, "oracle", 8, 5, 0.5);
    REQUIRE(p.skipped == 0);
    for (const auto& e : p.entries)
      REQUIRE(e.bin == sim::assign_bin(e.rec->target_bbox, solo.manifest.camera.width, 8));
  }

  SECTION("bin labels never use beam labels") {
    auto scrubbed = ds;
    for (auto& r : scrubbed.records) r.beam_label = 1;
    auto a = attack::build_proxy_dataset(ds, "oracle", 8, 5, 0.5);
    auto b = attack::build_proxy_dataset(scrubbed, "oracle", 8, 5, 0.5);
    REQUIRE(a.entries.size() == b.entries.size());
    for (size_t i = 0; i < a.entries.size(); i++) REQUIRE(a.entries[i].bin == b.entries[i].bin);
  }

  SECTION("largest mode is deterministic without a seed effect") {
    auto a = attack::build_proxy_dataset(ds, "largest", 8, 5, 0.3);
    auto b = attack::build_proxy_dataset(ds, "largest", 8, 999, 0.3);
    // selection differs (different subsets) but each chosen box is the largest
    (void)b;
    for (const auto& e : a.entries) {
      auto boxes = detect::detect_oracle(*e.rec);
      double best = 0;
      for (const auto& bx : boxes) best = std::max(best, static_cast<double>(bx.area()));
      bool found = false;
      for (const auto& bx : boxes)
        if (bx.area() == best && sim::assign_bin(bx, ds.manifest.camera.width, 8) == e.bin)
          found = true;
      CHECK(found);
    }
  }
}

TEST_CASE("uniform box choice matches the combinatorial expectation") {
  auto gp = gen_params(10000, {{"s4", 4, 1.0}}, 903);
  auto ds = sim::generate_dataset(gp);
  auto p = attack::build_proxy_dataset(ds, "oracle", 8, 77, 0.5);
  REQUIRE(p.entries.size() == 5000);

  double expected = 0;
  int hits = 0;
  for (const auto& e : p.entries) {
    int target_bin = sim::assign_bin(e.rec->target_bbox, ds.manifest.camera.width, 8);
    int same = 1;  // target itself
    for (const auto& d : e.rec->distractor_boxes)
      if (sim::assign_bin(d, ds.manifest.camera.width, 8) == target_bin) same++;
    expected += static_cast<double>(same) / (1 + e.rec->distractor_boxes.size());
    if (e.bin == target_bin) hits++;
  }
  expected /= p.entries.size();
  double got = static_cast<double>(hits) / p.entries.size();
  CHECK(got == Catch::Approx(expected).margin(0.03));
}

TEST_CASE("surrogate training on separable two-bin scenes") {
  const auto& solo = single_dataset();
  auto proxy = attack::build_proxy_dataset(solo, "oracle", 2, 11, 0.5);
  train::TrainConfig cfg;
  cfg.epochs = 6;
  cfg.seed = 3;
  auto s = attack::train_surrogate(proxy, cfg, surrogate_arch({8, 16}));
  CHECK(s.net.backbone.num_classes == 2);
  CHECK(s.arch_tag == "mini_plain");

  // held-out images the attacker never trained on
  attack::ProxyDataset heldout;
  heldout.num_bins = 2;
  std::set<const sim::DatasetRecord*> seen;
  for (const auto& e : proxy.entries) seen.insert(e.rec);
  for (const auto& r : solo.records) {
    if (seen.count(&r)) continue;
    heldout.entries.push_back(
        {&r, sim::assign_bin(r.target_bbox, solo.manifest.camera.width, 2)});
  }
  CHECK(proxy_accuracy(s, heldout) >= 0.95);
}

TEST_CASE("surrogate beats chance on the eight-bin task") {
  auto& s = trained_surrogate();
  auto heldout = attack::build_proxy_dataset(mixed_dataset(), "oracle", 8, 4242, 0.5);
  double acc = proxy_accuracy(s, heldout);
  CHECK(acc > 1.0 / 8 + 0.3);

  // an untrained surrogate sits at chance level
  auto proxy = attack::build_proxy_dataset(mixed_dataset(), "oracle", 8, 41, 0.5);
  train::TrainConfig cfg;
  cfg.epochs = 0;
  auto init = attack::train_surrogate(proxy, cfg, surrogate_arch());
  double chance = proxy_accuracy(init, heldout);
  CHECK(chance == Catch::Approx(1.0 / 8).margin(0.05));
}

TEST_CASE("surrogate normalization comes from its own data share") {
  auto proxy = attack::build_proxy_dataset(mixed_dataset(), "oracle", 8, 41, 0.5);
  train::TrainConfig cfg;
  cfg.epochs = 0;
  auto s = attack::train_surrogate(proxy, cfg, surrogate_arch());
  for (int c = 0; c < 3; c++) {
    CHECK(s.net.norm.stdev[c] > 0);
    // close to but not copied from the full-dataset statistics
    CHECK(s.net.norm.mean[c] == Catch::Approx(mixed_dataset().manifest.mean[c]).margin(0.02));
    CHECK(s.net.norm.mean[c] != mixed_dataset().manifest.mean[c]);
  }
}

TEST_CASE("universal perturbation obeys the construction rules") {
  auto& s = trained_surrogate();
  auto images = record_images(mixed_dataset(), 96);

  auto p = attack::generate_uap(s, images, 0.04, 32);
  CHECK(p.kind == "universal");
  CHECK(p.num_batches == 3);
  CHECK(p.batch_size == 32);
  CHECK(p.epsilon == 0.04f);
  CHECK(p.source_hash == attack::model_param_hash(s.net));

  float mx = 0;
  int zero = 0;
  for (float v : p.delta.data) {
    mx = std::max(mx, std::abs(v));
    bool ok = v == 0.0f || std::abs(v) == 0.04f;
    REQUIRE(ok);
    if (v == 0.0f) zero++;
  }
  CHECK(mx <= 0.04f);
  CHECK(zero < static_cast<int>(p.delta.data.size()) / 2);

  SECTION("zero epsilon gives a zero delta") {
    auto z = attack::generate_uap(s, images, 0.0, 32);
    for (float v : z.delta.data) REQUIRE(v == 0.0f);
  }

  SECTION("reruns are bit-identical") {
    auto q = attack::generate_uap(s, images, 0.04, 32);
    REQUIRE(p.delta.data == q.delta.data);
  }

  SECTION("partial final batch still counts as a batch") {
    auto images49 = record_images(mixed_dataset(), 49);
    auto q = attack::generate_uap(s, images49, 0.04, 32);
    CHECK(q.num_batches == 2);
  }
}

TEST_CASE("perturbation gradient matches finite differences") {
  // micro surrogate in double precision, 8x8 inputs
  model::BackboneConfig bc;
  bc.stage_channels = {4, 4};
  bc.input_h = 8;
  bc.input_w = 8;
  bc.num_classes = 4;
  model::Model<double> m(bc, model::FrmConfig{});
  m.init(77);
  m.norm.mean = {0.45, 0.5, 0.55};
  m.norm.stdev = {0.2, 0.2, 0.2};

  std::vector<img::ImageU8> imgs(4);
  Rng rng(5);
  for (auto& im : imgs) {
    im.width = 8;
    im.height = 8;
    im.rgb.resize(8 * 8 * 3);
    for (auto& v : im.rgb) v = static_cast<uint8_t>(rng.uniform_int(26, 230));
  }
  std::vector<const img::ImageU8*> ptrs;
  for (auto& im : imgs) ptrs.push_back(&im);

  auto g = attack::uap_mean_gradient(m, ptrs, 2);
  const double h = 1e-5;
  Rng pick(9);
  int checked = 0;
  for (int t = 0; t < 50; t++) {
    int64_t i = pick.uniform_int(0, static_cast<int64_t>(g.data.size()) - 1);
    Tensor<double> dp({3, 8, 8}), dm({3, 8, 8});
    dp.data[i] = h;
    dm.data[i] = -h;
    double fd =
        (attack::uap_loss(m, ptrs, dp, 2) - attack::uap_loss(m, ptrs, dm, 2)) / (2 * h);
    if (std::abs(fd) < 1e-9) continue;
    REQUIRE(g.data[i] == Catch::Approx(fd).epsilon(1e-3).margin(1e-10));
    checked++;
  }
  REQUIRE(checked >= 30);
}

TEST_CASE("a single-batch run equals one textbook sign-gradient step") {
  auto& s = trained_surrogate();
  auto images = record_images(mixed_dataset(), 16);
  auto p = attack::generate_uap(s, images, 0.03, 32);
  REQUIRE(p.num_batches == 1);

  // independent recomputation: forward, -mean max logit, backprop, sign
  Tensor<float> x = model::image_batch<float>(images);
  Tensor<float> logits = s.net.forward(x, false);
  Tensor<float> dlogits(logits.shape);
  const int64_t L = logits.shape[1];
  for (int64_t b = 0; b < logits.shape[0]; b++) {
    int top = 0;
    for (int64_t j = 1; j < L; j++)
      if (logits.data[b * L + j] > logits.data[b * L + top]) top = static_cast<int>(j);
    dlogits.data[b * L + top] = -1.0f / logits.shape[0];
  }
  s.net.zero_grad();
  Tensor<float> dx = s.net.backward(dlogits);
  const int64_t per = 3 * 64 * 64;
  for (int64_t i = 0; i < per; i++) {
    double acc = 0;
    for (int64_t b = 0; b < logits.shape[0]; b++) {
      float px = x.data[b * per + i];
      if (px <= 0.0f || px >= 1.0f) continue;
      acc += dx.data[b * per + i];
    }
    float want = acc > 0 ? 0.03f : (acc < 0 ? -0.03f : 0.0f);
    REQUIRE(p.delta.data[i] == want);
  }
}

TEST_CASE("per-sample attack is at least as strong as the universal one") {
  auto& s = trained_surrogate();
  auto heldout = attack::build_proxy_dataset(mixed_dataset(), "oracle", 8, 515, 0.5);
  heldout.entries.resize(200);

  std::vector<const img::ImageU8*> images;
  for (const auto& e : heldout.entries) images.push_back(&e.rec->image);
  // at large eps both attacks bottom out near chance, so compare at a budget
  // where accuracy is still above the floor
  auto uni = attack::generate_uap(s, images, 0.02, 32);

  int hits_uni = 0, hits_per = 0, hits_clean = 0;
  for (const auto& e : heldout.entries) {
    Tensor<float> x = model::image_batch<float>({&e.rec->image});
    Tensor<float> flat({3, 64, 64});
    std::copy(x.data.begin(), x.data.end(), flat.data.begin());

    auto run = [&](const Tensor<float>& in) {
      Tensor<float> batch({1, 3, 64, 64});
      std::copy(in.data.begin(), in.data.end(), batch.data.begin());
      Tensor<float> logits = s.net.forward(batch, false);
      return model::argmax_lowest(logits.data.data(), logits.shape[1]) + 1;
    };

    if (run(flat) == e.bin) hits_clean++;
    if (run(attack::apply_perturbation(flat, uni)) == e.bin) hits_uni++;
    auto per = attack::fgsm_sample_attack(s, e.rec->image, 0.02);
    if (run(attack::apply_perturbation(flat, per)) == e.bin) hits_per++;
  }
  CHECK(hits_per <= hits_uni);
  CHECK(hits_uni < hits_clean);

  SECTION("per-sample delta is deterministic per image") {
    auto a = attack::fgsm_sample_attack(s, heldout.entries[0].rec->image, 0.02);
    auto b = attack::fgsm_sample_attack(s, heldout.entries[0].rec->image, 0.02);
    CHECK(a.kind == "per_sample");
    REQUIRE(a.delta.data == b.delta.data);
  }
}

TEST_CASE("gaussian noise baseline") {
  Tensor<float> gray({3, 578, 578});
  gray.fill(0.5f);

  SECTION("zero sigma is the identity") {
    attack::NoiseSpec spec{0.0, 9, true, 0.05};
    auto out = attack::gaussian_noise(gray, spec);
    REQUIRE(out.data == gray.data);
  }

  SECTION("two-sigma mass matches the matched-budget rule") {
    attack::NoiseSpec spec{0.025, 10, false, 0.05};
    auto out = attack::gaussian_noise(gray, spec);
    int64_t inside = 0;
    for (size_t i = 0; i < out.data.size(); i++)
      if (std::abs(out.data[i] - 0.5f) <= 2 * 0.025) inside++;
    double frac = static_cast<double>(inside) / out.data.size();
    CHECK(out.data.size() >= 1000000);
    CHECK(frac == Catch::Approx(0.9545).margin(0.005));
  }

  SECTION("seeded determinism and clipping") {
    Tensor<float> bright({3, 32, 32});
    bright.fill(0.99f);
    attack::NoiseSpec spec{0.025, 11, true, 0.05};
    auto a = attack::gaussian_noise(bright, spec);
    auto b = attack::gaussian_noise(bright, spec);
    REQUIRE(a.data == b.data);
    for (float v : a.data) {
      REQUIRE(v >= 0.0f);
      REQUIRE(v <= 1.0f);
    }
    spec.seed = 12;
    auto c = attack::gaussian_noise(bright, spec);
    CHECK(a.data != c.data);
  }

  SECTION("sigma bound is enforced") {
    attack::NoiseSpec spec{0.08, 9, true, 0.05};
    CHECK_THROWS_AS(attack::gaussian_noise(gray, spec), ConfigError);
  }
}

TEST_CASE("perturbation application clips into the valid range") {
  attack::Perturbation p;
  p.epsilon = 0.05f;
  p.delta = Tensor<float>({3, 2, 2});
  p.delta.fill(0.05f);
  p.delta(0, 0, 0) = -0.05f;

  Tensor<float> img({3, 2, 2});
  img.fill(1.0f);
  img(0, 0, 0) = 0.02f;
  auto out = attack::apply_perturbation(img, p);
  CHECK(out(0, 0, 0) == 0.0f);  // clipped below
  for (size_t i = 1; i < out.data.size(); i++) CHECK(out.data[i] == 1.0f);

  Tensor<float> wrong({3, 4, 4});
  CHECK_THROWS_AS(attack::apply_perturbation(wrong, p), std::invalid_argument);

  attack::Perturbation zero;
  zero.delta = Tensor<float>({3, 2, 2});
  auto same = attack::apply_perturbation(img, zero);
  REQUIRE(same.data == img.data);
}

TEST_CASE("perturbation files round-trip and stay reproducible") {
  auto& s = trained_surrogate();
  auto images = record_images(mixed_dataset(), 64);
  auto p = attack::generate_uap(s, images, 0.05, 32);

  auto path = tmp_file("uap.bin");
  attack::save_perturbation(p, path);
  auto back = attack::load_perturbation(path);
  CHECK(back.epsilon == p.epsilon);
  CHECK(back.kind == p.kind);
  CHECK(back.source_hash == p.source_hash);
  CHECK(back.batch_size == 32);
  CHECK(back.num_batches == 2);
  REQUIRE(back.delta.shape == p.delta.shape);
  REQUIRE(back.delta.data == p.delta.data);

  // header is a readable one-line JSON prefix
  std::ifstream f(path, std::ios::binary);
  std::string line;
  std::getline(f, line);
  auto h = nlohmann::json::parse(line);
  CHECK(h["epsilon"].get<double>() == Catch::Approx(0.05).margin(1e-7));
  CHECK(h["height"] == 64);
  CHECK(h["kind"] == "universal");

  auto path2 = tmp_file("uap2.bin");
  attack::save_perturbation(attack::generate_uap(s, images, 0.05, 32), path2);
  std::ifstream f1(path, std::ios::binary), f2(path2, std::ios::binary);
  std::string b1((std::istreambuf_iterator<char>(f1)), {});
  std::string b2((std::istreambuf_iterator<char>(f2)), {});
  REQUIRE(b1 == b2);

  CHECK_THROWS_AS(attack::load_perturbation("/nonexistent/u.bin"), MissingArtifactError);
  fs::remove(path);
  fs::remove(path2);
}

TEST_CASE("attack artifacts ignore the victim entirely") {
  // same attacker pipeline against two datasets that differ only in beam labels
  auto scrubbed = mixed_dataset();
  for (auto& r : scrubbed.records) r.beam_label = (r.beam_label % 16) + 1;

  train::TrainConfig cfg;
  cfg.epochs = 2;
  cfg.seed = 19;
  auto p1 = attack::build_proxy_dataset(mixed_dataset(), "oracle", 8, 23, 0.5);
  auto p2 = attack::build_proxy_dataset(scrubbed, "oracle", 8, 23, 0.5);
  auto s1 = attack::train_surrogate(p1, cfg, surrogate_arch());
  auto s2 = attack::train_surrogate(p2, cfg, surrogate_arch());

  auto i1 = record_images(mixed_dataset(), 48);
  auto i2 = record_images(scrubbed, 48);
  auto u1 = attack::generate_uap(s1, i1, 0.04, 32);
  auto u2 = attack::generate_uap(s2, i2, 0.04, 32);

  auto f1 = tmp_file("audit1.bin"), f2 = tmp_file("audit2.bin");
  attack::save_perturbation(u1, f1);
  attack::save_perturbation(u2, f2);
  std::ifstream a(f1, std::ios::binary), b(f2, std::ios::binary);
  std::string ba((std::istreambuf_iterator<char>(a)), {});
  std::string bb((std::istreambuf_iterator<char>(b)), {});
  REQUIRE(ba == bb);
  fs::remove(f1);
  fs::remove(f2);
}
