#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "beamguard/model.hpp"
#include "beamguard/train.hpp"

using namespace beamguard;

namespace {

Tensor<double> random_tensor(std::vector<int64_t> shape, Rng& rng, double lo = -1, double hi = 1) {
  Tensor<double> t(std::move(shape));
  for (auto& v : t.data) v = rng.uniform(lo, hi);
  return t;
}

// plain scalar convolution, the reference implementation
Tensor<double> conv_oracle(const Tensor<double>& x, const Tensor<double>& w,
                           const Tensor<double>& b, int k, int stride, int pad) {
  const int64_t B = x.shape[0], C = x.shape[1], H = x.shape[2], W = x.shape[3];
  const int64_t Co = w.shape[0];
  const int64_t Ho = (H + 2 * pad - k) / stride + 1, Wo = (W + 2 * pad - k) / stride + 1;
  Tensor<double> out({B, Co, Ho, Wo});
  for (int64_t bi = 0; bi < B; bi++)
    for (int64_t co = 0; co < Co; co++)
      for (int64_t oh = 0; oh < Ho; oh++)
        for (int64_t ow = 0; ow < Wo; ow++) {
          double acc = b.data[co];
          for (int64_t c = 0; c < C; c++)
            for (int ki = 0; ki < k; ki++)
              for (int kj = 0; kj < k; kj++) {
                int64_t ih = oh * stride - pad + ki, iw = ow * stride - pad + kj;
                if (ih < 0 || ih >= H || iw < 0 || iw >= W) continue;
                acc += x(bi, c, ih, iw) * w(co, (c * k + ki) * k + kj);
              }
          out(bi, co, oh, ow) = acc;
        }
  return out;
}

double dot(const Tensor<double>& a, const Tensor<double>& b) {
  double s = 0;
  for (size_t i = 0; i < a.data.size(); i++) s += a.data[i] * b.data[i];
  return s;
}

model::Model<double> micro_model(bool frm_on, uint64_t seed) {
  model::BackboneConfig bc;
  bc.stage_channels = {4, 6};
  bc.input_h = 16;
  bc.input_w = 16;
  bc.num_classes = 4;
  model::FrmConfig fc;
  fc.enabled = frm_on;
  fc.bottleneck_channels = 3;
  fc.depth = 3;
  model::Model<double> m(bc, fc);
  m.init(seed);
  m.norm.mean = {0.4, 0.5, 0.6};
  m.norm.stdev = {0.2, 0.25, 0.3};
  if (frm_on) {
    // the final refinement conv starts at zero; give it weight for gradient tests
    Rng rng(seed_mix(seed, 99));
    for (auto& v : m.frm.convs.back().weight.data) v = rng.uniform(-0.1, 0.1);
  }
  return m;
}

}  // namespace

TEST_CASE("convolution matches the scalar reference") {
  Rng rng(42);
  for (auto [stride, pad] : {std::pair{1, 1}, {2, 1}, {1, 0}}) {
    nn::Conv2d<double> conv(3, 4, 3, stride, pad);
    conv.init(rng);
    auto x = random_tensor({2, 3, 6, 6}, rng);
    auto got = conv.forward(x);
    auto want = conv_oracle(x, conv.weight, conv.bias, 3, stride, pad);
    REQUIRE(got.shape == want.shape);
    for (size_t i = 0; i < got.data.size(); i++)
      REQUIRE(got.data[i] == Catch::Approx(want.data[i]).margin(1e-12));
  }
}

TEST_CASE("float convolution agrees with a double scalar oracle on a 4x4 crop") {
  Rng rng(7);
  nn::Conv2d<float> conv(3, 5, 3, 1, 1);
  conv.init(rng);
  Tensor<float> x({1, 3, 4, 4});
  for (auto& v : x.data) v = static_cast<float>(rng.uniform(0, 1));
  auto got = conv.forward(x);
  auto want = conv_oracle(x.template cast<double>(), conv.weight.template cast<double>(),
                          conv.bias.template cast<double>(), 3, 1, 1);
  for (size_t i = 0; i < got.data.size(); i++)
    REQUIRE(static_cast<double>(got.data[i]) == Catch::Approx(want.data[i]).margin(1e-5));
}

TEST_CASE("convolution gradients match finite differences") {
  Rng rng(3);
  nn::Conv2d<double> conv(2, 3, 3, 2, 1);
  conv.init(rng);
  auto x = random_tensor({2, 2, 5, 5}, rng);
  auto probe = random_tensor({2, 3, 3, 3}, rng);  // fixed cotangent
  auto loss = [&](const Tensor<double>& in) { return dot(conv.forward(in), probe); };

  conv.forward(x);
  conv.dweight.zero();
  conv.dbias.zero();
  auto dx = conv.backward(probe);

  const double h = 1e-6;
  Rng pick(11);
  for (int t = 0; t < 20; t++) {
    size_t i = pick.uniform_int(0, static_cast<int64_t>(x.data.size()) - 1);
    auto xp = x, xm = x;
    xp.data[i] += h;
    xm.data[i] -= h;
    double fd = (loss(xp) - loss(xm)) / (2 * h);
    REQUIRE(dx.data[i] == Catch::Approx(fd).margin(1e-6));
  }
  for (int t = 0; t < 20; t++) {
    size_t i = pick.uniform_int(0, static_cast<int64_t>(conv.weight.data.size()) - 1);
    double orig = conv.weight.data[i];
    conv.weight.data[i] = orig + h;
    double fp = loss(x);
    conv.weight.data[i] = orig - h;
    double fm = loss(x);
    conv.weight.data[i] = orig;
    REQUIRE(conv.dweight.data[i] == Catch::Approx((fp - fm) / (2 * h)).margin(1e-6));
  }
  for (int64_t i = 0; i < 3; i++) {
    double orig = conv.bias.data[i];
    conv.bias.data[i] = orig + h;
    double fp = loss(x);
    conv.bias.data[i] = orig - h;
    double fm = loss(x);
    conv.bias.data[i] = orig;
    REQUIRE(conv.dbias.data[i] == Catch::Approx((fp - fm) / (2 * h)).margin(1e-6));
  }
}

TEST_CASE("batch norm statistics and modes") {
  Rng rng(5);
  nn::BatchNorm2d<double> bn(2);
  auto x = random_tensor({3, 2, 4, 4}, rng);
  auto y = bn.forward(x, true);

  for (int64_t c = 0; c < 2; c++) {
    double s = 0, s2 = 0;
    int64_t n = 0;
    for (int64_t b = 0; b < 3; b++)
      for (int64_t i = 0; i < 16; i++) {
        double v = x.data[(b * 2 + c) * 16 + i];
        s += v;
        s2 += v * v;
        n++;
      }
    double mu = s / n, var = s2 / n - mu * mu;
    // normalized output reproduces (x - mu)/sqrt(var+eps) scaled by gamma=1
    for (int64_t b = 0; b < 3; b++)
      for (int64_t i = 0; i < 16; i++) {
        double v = x.data[(b * 2 + c) * 16 + i];
        REQUIRE(y.data[(b * 2 + c) * 16 + i] ==
                Catch::Approx((v - mu) / std::sqrt(var + 1e-5)).margin(1e-10));
      }
    REQUIRE(bn.running_mean.data[c] == Catch::Approx(0.1 * mu).margin(1e-10));
    REQUIRE(bn.running_var.data[c] ==
            Catch::Approx(0.9 + 0.1 * var * n / (n - 1)).margin(1e-10));
  }

  // eval mode uses the running statistics, not the batch
  auto z = bn.forward(x, false);
  for (int64_t c = 0; c < 2; c++) {
    double rm = bn.running_mean.data[c], rv = bn.running_var.data[c];
    REQUIRE(z.data[c * 16] ==
            Catch::Approx((x.data[c * 16] - rm) / std::sqrt(rv + 1e-5)).margin(1e-10));
  }
}

TEST_CASE("batch norm backward matches finite differences in training mode") {
  Rng rng(9);
  nn::BatchNorm2d<double> bn(2);
  for (auto& v : bn.gamma.data) v = rng.uniform(0.5, 1.5);
  for (auto& v : bn.beta.data) v = rng.uniform(-0.5, 0.5);
  auto x = random_tensor({2, 2, 3, 3}, rng);
  auto probe = random_tensor({2, 2, 3, 3}, rng);
  auto loss = [&](const Tensor<double>& in) { return dot(bn.forward(in, true), probe); };

  bn.forward(x, true);
  bn.dgamma.zero();
  bn.dbeta.zero();
  auto dx = bn.backward(probe);
  const double h = 1e-6;
  for (size_t i = 0; i < x.data.size(); i += 5) {
    auto xp = x, xm = x;
    xp.data[i] += h;
    xm.data[i] -= h;
    REQUIRE(dx.data[i] == Catch::Approx((loss(xp) - loss(xm)) / (2 * h)).margin(1e-6));
  }
  for (int64_t c = 0; c < 2; c++) {
    double orig = bn.gamma.data[c];
    bn.gamma.data[c] = orig + h;
    double fp = loss(x);
    bn.gamma.data[c] = orig - h;
    double fm = loss(x);
    bn.gamma.data[c] = orig;
    REQUIRE(bn.dgamma.data[c] == Catch::Approx((fp - fm) / (2 * h)).margin(1e-6));
  }
}

TEST_CASE("linear layer forward and gradients") {
  Rng rng(13);
  nn::Linear<double> fc(4, 3);
  fc.init(rng);
  auto x = random_tensor({2, 4}, rng);
  auto y = fc.forward(x);
  for (int64_t b = 0; b < 2; b++)
    for (int64_t j = 0; j < 3; j++) {
      double acc = fc.bias.data[j];
      for (int64_t i = 0; i < 4; i++) acc += fc.weight(j, i) * x(b, i);
      REQUIRE(y(b, j) == Catch::Approx(acc).margin(1e-12));
    }

  auto probe = random_tensor({2, 3}, rng);
  fc.dweight.zero();
  fc.dbias.zero();
  auto dx = fc.backward(probe);
  auto loss = [&](const Tensor<double>& in) { return dot(fc.forward(in), probe); };
  const double h = 1e-6;
  for (size_t i = 0; i < x.data.size(); i++) {
    auto xp = x, xm = x;
    xp.data[i] += h;
    xm.data[i] -= h;
    REQUIRE(dx.data[i] == Catch::Approx((loss(xp) - loss(xm)) / (2 * h)).margin(1e-8));
  }
}

TEST_CASE("global average pool") {
  Tensor<double> x({1, 2, 2, 2});
  x.fill(3.5);
  x(0, 1, 0, 0) = 1;
  x(0, 1, 0, 1) = 2;
  x(0, 1, 1, 0) = 3;
  x(0, 1, 1, 1) = 6;
  nn::GlobalAvgPool<double> gap;
  auto y = gap.forward(x);
  CHECK(y(0, 0) == Catch::Approx(3.5));
  CHECK(y(0, 1) == Catch::Approx(3.0));
  Tensor<double> d({1, 2});
  d(0, 0) = 4;
  d(0, 1) = 8;
  auto dx = gap.backward(d);
  CHECK(dx(0, 0, 0, 0) == Catch::Approx(1.0));
  CHECK(dx(0, 1, 1, 1) == Catch::Approx(2.0));
}

TEST_CASE("bilinear resize is identity at matching size and adjoint-consistent") {
  Rng rng(21);
  auto x = random_tensor({1, 2, 5, 5}, rng);
  auto same = nn::resize_bilinear(x, 5, 5);
  REQUIRE(same.data == x.data);

  auto up = nn::resize_bilinear(x, 8, 8);
  REQUIRE(up.shape == std::vector<int64_t>{1, 2, 8, 8});
  // adjoint identity: <resize(x), y> == <x, resize_backward(y)>
  auto y = random_tensor({1, 2, 8, 8}, rng);
  auto back = nn::resize_bilinear_backward(y, 5, 5);
  REQUIRE(dot(up, y) == Catch::Approx(dot(x, back)).margin(1e-10));

  // constant images stay constant under resampling
  Tensor<double> c({1, 1, 3, 3});
  c.fill(0.7);
  auto cz = nn::resize_bilinear(c, 7, 7);
  for (double v : cz.data) REQUIRE(v == Catch::Approx(0.7).margin(1e-12));
}

TEST_CASE("feature extraction obeys the shape contract and is stateless in eval mode") {
  auto m = micro_model(false, 4);
  Tensor<double> zero({1, 3, 16, 16});
  auto f = m.features_from_raw(zero, false);
  REQUIRE(f.shape == std::vector<int64_t>{1, 6, 2, 2});
  for (double v : f.data) REQUIRE(std::isfinite(v));

  Rng rng(6);
  auto one = random_tensor({1, 3, 16, 16}, rng, 0, 1);
  Tensor<double> dup({2, 3, 16, 16});
  std::copy(one.data.begin(), one.data.end(), dup.data.begin());
  std::copy(one.data.begin(), one.data.end(), dup.data.begin() + one.data.size());
  auto fd = m.features_from_raw(dup, false);
  for (int64_t i = 0; i < 6 * 2 * 2; i++)
    REQUIRE(fd.data[i] == Catch::Approx(fd.data[6 * 2 * 2 + i]).margin(1e-12));
}

TEST_CASE("refinement module layer stack") {
  auto m = micro_model(true, 8);
  Rng rng(17);
  auto f = random_tensor({2, 6, 2, 2}, rng);

  SECTION("zero weights produce a zero map") {
    auto z = micro_model(true, 8);
    for (auto& c : z.frm.convs) {
      c.weight.zero();
      c.bias.zero();
    }
    auto out = model::frm_forward(z, f);
    for (double v : out.data) REQUIRE(v == 0.0);
  }

  SECTION("zero-initialized final layer makes refinement start as identity") {
    auto fresh = micro_model(true, 15);
    fresh.frm.convs.back().weight.zero();
    fresh.frm.convs.back().bias.zero();
    auto refined = model::refine_features(fresh, f);
    REQUIRE(refined.data == f.data);
  }

  SECTION("depth-2 stack is conv, relu, conv") {
    model::BackboneConfig bc;
    bc.stage_channels = {4, 6};
    bc.input_h = 16;
    bc.input_w = 16;
    bc.num_classes = 4;
    model::FrmConfig fc;
    fc.enabled = true;
    fc.bottleneck_channels = 3;
    fc.depth = 2;
    model::Model<double> d2(bc, fc);
    d2.init(3);
    Rng wr(31);
    for (auto& v : d2.frm.convs.back().weight.data) v = wr.uniform(-0.2, 0.2);
    REQUIRE(d2.frm.convs.size() == 2);
    REQUIRE(d2.frm.bns.empty());
    auto got = model::frm_forward(d2, f);
    nn::ReLU<double> relu;
    auto want = d2.frm.convs[1].forward(relu.forward(d2.frm.convs[0].forward(f)));
    for (size_t i = 0; i < got.data.size(); i++)
      REQUIRE(got.data[i] == Catch::Approx(want.data[i]).margin(1e-12));
  }

  SECTION("forward equals the composition of verified primitives") {
    auto got = model::frm_forward(m, f);
    nn::ReLU<double> r0, r1;
    auto h = r0.forward(m.frm.convs[0].forward(f));
    h = r1.forward(m.frm.bns[0].forward(m.frm.convs[1].forward(h), false));
    auto want = m.frm.convs[2].forward(h);
    for (size_t i = 0; i < got.data.size(); i++)
      REQUIRE(got.data[i] == Catch::Approx(want.data[i]).margin(1e-10));
  }

  SECTION("refined features plus module output reconstruct the input") {
    auto refined = model::refine_features(m, f);
    auto r = model::frm_forward(m, f);
    for (size_t i = 0; i < f.data.size(); i++)
      REQUIRE(refined.data[i] + r.data[i] == Catch::Approx(f.data[i]).margin(1e-6));
  }

  SECTION("disabled module is a bitwise pass-through") {
    auto off = micro_model(false, 8);
    auto refined = model::refine_features(off, f);
    REQUIRE(refined.data == f.data);
    CHECK_THROWS_AS(model::frm_forward(off, f), ConfigError);
  }
}

TEST_CASE("parameter counts match the closed forms") {
  model::BackboneConfig bc;  // defaults: stages 16/32/64, 16 classes
  model::FrmConfig off;
  model::Model<float> base(bc, off);

  auto conv_p = [](int64_t ci, int64_t co) { return ci * co * 9 + co; };
  int64_t want = conv_p(3, 16) + 2 * 16;  // stem + bn
  int prev = 16;
  for (int c : bc.stage_channels) {
    want += conv_p(prev, c) + 2 * c;      // downsample
    want += 2 * (conv_p(c, c) + 2 * c);   // two block convs
    prev = c;
  }
  want += 64 * 16 + 16;  // head
  CHECK(base.param_count() == want);

  model::FrmConfig on;
  on.enabled = true;
  on.bottleneck_channels = 32;
  on.depth = 3;
  model::Model<float> with(bc, on);
  const int64_t C = 64, k = 32, depth = 3;
  int64_t frm_delta = 9 * C * k + 9 * k * k * (depth - 2) + 9 * k * C  // conv weights
                      + k * (depth - 1) + C                            // biases
                      + 2 * k * (depth - 2);                           // bn affine
  CHECK(with.param_count() - base.param_count() == frm_delta);
}

TEST_CASE("logit argmax is invariant to constant shifts") {
  auto m = micro_model(true, 23);
  Rng rng(2);
  auto x = random_tensor({3, 3, 16, 16}, rng, 0, 1);
  auto logits = model::classify_logits(m, x);
  for (int64_t b = 0; b < 3; b++) {
    const double* row = &logits.data[b * 4];
    int base = model::argmax_lowest(row, 4);
    std::vector<double> shifted(row, row + 4);
    for (auto& v : shifted) v += 123.456;
    CHECK(model::argmax_lowest(shifted.data(), 4) == base);
    std::vector<double> scaled(row, row + 4);
    for (auto& v : scaled) v *= 7.5;
    CHECK(model::argmax_lowest(scaled.data(), 4) == base);
  }
}

TEST_CASE("beam prediction uses lowest-index tie breaking") {
  std::vector<double> tie{0.5, 0.5, 0.5, 0.5};
  CHECK(model::argmax_lowest(tie.data(), 4) == 0);
  std::vector<double> peak{0.1, 0.9, 0.9, 0.2};
  CHECK(model::argmax_lowest(peak.data(), 4) == 1);
}

TEST_CASE("end-to-end input gradient matches finite differences") {
  for (bool frm_on : {false, true}) {
    for (bool train_mode : {false, true}) {
      auto m = micro_model(frm_on, 31);
      Rng rng(41);
      Tensor<double> x({2, 3, 16, 16});
      for (auto& v : x.data) v = rng.uniform(0.05, 0.95);
      std::vector<int> labels{2, 4};

      auto loss_of = [&](const Tensor<double>& in) {
        auto logits = m.forward(in, train_mode);
        Tensor<double> d;
        return train::ce_loss_and_grad(logits, labels, d);
      };

      auto logits = m.forward(x, train_mode);
      Tensor<double> dlogits;
      train::ce_loss_and_grad(logits, labels, dlogits);
      m.zero_grad();
      auto dx = m.backward(dlogits);

      const double h = 1e-5;
      Rng pick(57);
      int checked = 0;
      for (int t = 0; t < 50; t++) {
        size_t i = pick.uniform_int(0, static_cast<int64_t>(x.data.size()) - 1);
        auto xp = x, xm = x;
        xp.data[i] += h;
        xm.data[i] -= h;
        double fd = (loss_of(xp) - loss_of(xm)) / (2 * h);
        if (std::abs(fd) < 1e-8) continue;  // relu kinks and dead units
        REQUIRE(dx.data[i] == Catch::Approx(fd).epsilon(1e-3).margin(1e-9));
        checked++;
      }
      REQUIRE(checked >= 30);
    }
  }
}
