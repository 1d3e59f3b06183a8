#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <complex>
#include <vector>

#include "beamguard/common.hpp"
#include "beamguard/rf.hpp"

using namespace beamguard;
using cplx = std::complex<double>;

namespace {

// independent recomputations, deliberately plain loops

std::vector<cplx> oracle_steering(double az, int n_ant) {
  std::vector<cplx> v(n_ant);
  for (int n = 0; n < n_ant; n++) v[n] = std::polar(1.0, M_PI * n * std::sin(az));
  return v;
}

std::vector<std::vector<cplx>> oracle_channel(const rf::PathSpec& los,
                                              const std::vector<rf::PathSpec>& nlos, int q_count,
                                              int n_ant, double df) {
  std::vector<rf::PathSpec> paths;
  paths.push_back(los);
  for (auto& p : nlos) paths.push_back(p);
  std::vector<std::vector<cplx>> g(q_count, std::vector<cplx>(n_ant));
  for (int q = 0; q < q_count; q++)
    for (int n = 0; n < n_ant; n++) {
      cplx acc = 0;
      for (auto& p : paths)
        acc += p.gain * std::polar(1.0, M_PI * n * std::sin(p.azimuth_rad)) *
               std::polar(1.0, -2.0 * M_PI * q * p.delay_s * df);
      g[q][n] = acc;
    }
  return g;
}

double oracle_rate(const std::vector<std::vector<cplx>>& g, const std::vector<cplx>& beam,
                   double symbol_power, double noise_var) {
  double acc = 0;
  for (auto& gq : g) {
    cplx dot = 0;
    for (size_t n = 0; n < gq.size(); n++) dot += gq[n] * beam[n];
    acc += std::log2(1.0 + symbol_power / noise_var * std::norm(dot));
  }
  return acc / static_cast<double>(g.size());
}

rf::PathSpec random_path(Rng& rng, double max_gain) {
  rf::PathSpec p;
  p.gain = std::polar(rng.uniform(0.05, max_gain), rng.uniform(0, 2 * M_PI));
  p.azimuth_rad = rng.uniform(-1.4, 1.4);
  p.delay_s = rng.uniform(0, 200e-9);
  return p;
}

}  // namespace

TEST_CASE("array response at boresight is all ones") {
  auto a = rf::array_response(0.0, 0.0, 4);
  REQUIRE(a.size() == 4);
  for (int n = 0; n < 4; n++) {
    CHECK(std::abs(a[n] - cplx(1.0, 0.0)) < 1e-15);
  }
}

TEST_CASE("two-element response at 30 degrees") {
  auto a = rf::array_response(M_PI / 6, 0.0, 2);
  CHECK(std::abs(a[0] - cplx(1.0, 0.0)) < 1e-12);
  CHECK(std::abs(a[1] - cplx(0.0, 1.0)) < 1e-12);
}

TEST_CASE("array response matches per-entry exponentiation") {
  auto a = rf::array_response(0.21, 0.0, 16);
  auto ref = oracle_steering(0.21, 16);
  for (int n = 0; n < 16; n++) CHECK(std::abs(a[n] - ref[n]) < 1e-12);
}

TEST_CASE("array response rejects out-of-sector azimuth") {
  CHECK_THROWS_AS(rf::array_response(M_PI / 2, 0.0, 4), std::domain_error);
  CHECK_THROWS_AS(rf::array_response(-M_PI / 2, 0.0, 4), std::domain_error);
  CHECK_THROWS_AS(rf::array_response(2.1, 0.0, 4), std::domain_error);
}

TEST_CASE("codebook rows are unit norm on the oversampled grid") {
  auto cb = rf::build_codebook(16, 64);
  REQUIRE(cb.num_beams == 64);
  REQUIRE(cb.rows.rows() == 64);
  REQUIRE(cb.rows.cols() == 16);
  for (int i = 1; i <= 64; i++) {
    CHECK(std::abs(cb.row(i).norm() - 1.0) < 1e-12);
    CHECK(cb.grid_sin[i - 1] == Catch::Approx(-1.0 + (2.0 * i - 1.0) / 64.0).margin(1e-15));
  }
}

TEST_CASE("two-beam codebook spans the quarter-wave phases") {
  auto cb = rf::build_codebook(2, 2);
  double s = 1.0 / std::sqrt(2.0);
  CHECK(std::abs(cb.row(1)(0) - cplx(s, 0)) < 1e-12);
  CHECK(std::abs(cb.row(1)(1) - cplx(0, -s)) < 1e-12);
  CHECK(std::abs(cb.row(2)(0) - cplx(s, 0)) < 1e-12);
  CHECK(std::abs(cb.row(2)(1) - cplx(0, s)) < 1e-12);
}

TEST_CASE("each beam peaks at its design angle under a dense sweep") {
  auto cb = rf::build_codebook(8, 16);
  double step = M_PI / 512;
  for (int i = 1; i <= 16; i++) {
    double best_gain = -1, best_theta = 0;
    for (double th = -M_PI / 2 + step; th < M_PI / 2; th += step) {
      auto a = rf::array_response(th, 0.0, 8);
      cplx dot = 0;
      for (int n = 0; n < 8; n++) dot += std::conj(a[n]) * cb.row(i)(n);
      if (std::abs(dot) > best_gain) {
        best_gain = std::abs(dot);
        best_theta = th;
      }
    }
    CHECK(std::abs(best_theta - std::asin(cb.grid_sin[i - 1])) < step + 1e-12);
  }
}

TEST_CASE("pure line-of-sight channel repeats across subcarriers") {
  rf::PathSpec los;
  los.gain = 1.0;
  los.azimuth_rad = 0.35;
  auto ch = rf::synthesize_channel(los, {}, 6, 8);
  REQUIRE(ch.g.rows() == 6);
  REQUIRE(ch.g.cols() == 8);
  auto ref = oracle_steering(0.35, 8);
  for (int q = 0; q < 6; q++)
    for (int n = 0; n < 8; n++) CHECK(std::abs(ch.g(q, n) - ref[n]) < 1e-12);
}

TEST_CASE("multipath synthesis matches the triple-loop recount") {
  Rng rng(41);
  for (int trial = 0; trial < 20; trial++) {
    rf::PathSpec los;
    los.gain = std::polar(1.0, rng.uniform(0, 2 * M_PI));
    los.azimuth_rad = rng.uniform(-1.4, 1.4);
    std::vector<rf::PathSpec> nlos;
    int n_paths = static_cast<int>(rng.uniform_int(0, 3));
    for (int p = 0; p < n_paths; p++) nlos.push_back(random_path(rng, 0.2));
    double df = 1e6;
    auto ch = rf::synthesize_channel(los, nlos, 8, 16, df);
    auto ref = oracle_channel(los, nlos, 8, 16, df);
    for (int q = 0; q < 8; q++)
      for (int n = 0; n < 16; n++) CHECK(std::abs(ch.g(q, n) - ref[q][n]) < 1e-12);
  }
}

TEST_CASE("zero channel carries zero rate") {
  rf::ChannelState ch;
  ch.g = Eigen::MatrixXcd::Zero(4, 8);
  rf::RateParams rp;
  Eigen::VectorXcd beam = Eigen::VectorXcd::Constant(8, cplx(0.3, 0.1));
  CHECK(rf::average_rate(ch, beam, rp) == 0.0);
}

TEST_CASE("conjugate-matched beam attains the array gain") {
  rf::PathSpec los;
  los.gain = 1.0;
  los.azimuth_rad = 0.4;
  auto ch = rf::synthesize_channel(los, {}, 4, 16);
  rf::RateParams rp;
  rp.symbol_power = 1.0;
  rp.noise_variance = 1.0;
  auto a = rf::array_response(0.4, 0.0, 16);
  Eigen::VectorXcd beam(16);
  for (int n = 0; n < 16; n++) beam(n) = std::conj(a[n]) / 4.0;
  CHECK(rf::average_rate(ch, beam, rp) == Catch::Approx(std::log2(17.0)).epsilon(1e-12));
}

TEST_CASE("average rate matches an independent recount on random channels") {
  Rng rng(97);
  for (int trial = 0; trial < 30; trial++) {
    rf::PathSpec los;
    los.gain = std::polar(1.0, rng.uniform(0, 2 * M_PI));
    los.azimuth_rad = rng.uniform(-1.4, 1.4);
    std::vector<rf::PathSpec> nlos = {random_path(rng, 0.2), random_path(rng, 0.2),
                                      random_path(rng, 0.15)};
    auto ch = rf::synthesize_channel(los, nlos, 8, 16, 1e6);
    auto ref = oracle_channel(los, nlos, 8, 16, 1e6);
    rf::RateParams rp;
    rp.symbol_power = 2.5;
    rp.noise_variance = 0.04;
    std::vector<cplx> beam(16);
    Eigen::VectorXcd beam_e(16);
    for (int n = 0; n < 16; n++) {
      beam[n] = std::polar(rng.uniform(0.0, 0.5), rng.uniform(0, 2 * M_PI));
      beam_e(n) = beam[n];
    }
    CHECK(rf::average_rate(ch, beam_e, rp) ==
          Catch::Approx(oracle_rate(ref, beam, 2.5, 0.04)).margin(1e-10));
  }
}

TEST_CASE("rates are invariant when signal and noise scale together") {
  Rng rng(7);
  auto cb = rf::build_codebook(16, 16);
  for (int trial = 0; trial < 20; trial++) {
    rf::PathSpec los;
    los.gain = 1.0;
    los.azimuth_rad = rng.uniform(-1.3, 1.3);
    std::vector<rf::PathSpec> nlos = {random_path(rng, 0.2)};
    auto ch = rf::synthesize_channel(los, nlos, 8, 16);
    rf::RateParams a{1.0, 0.01};
    rf::RateParams b{137.0, 1.37};
    for (int i = 1; i <= 16; i++) {
      auto w = rf::beam_weights(cb, i);
      CHECK(rf::average_rate(ch, w, a) == Catch::Approx(rf::average_rate(ch, w, b)).margin(1e-10));
    }
    CHECK(rf::optimal_beam_index(ch, cb, a) == rf::optimal_beam_index(ch, cb, b));
  }
}

TEST_CASE("grid-steered channels select their own beam for every index") {
  for (int n_beams : {16, 64}) {
    auto cb = rf::build_codebook(16, n_beams);
    rf::RateParams rp;
    for (int i = 1; i <= n_beams; i++) {
      rf::PathSpec los;
      los.gain = 1.0;
      los.azimuth_rad = std::asin(cb.grid_sin[i - 1]);
      auto ch = rf::synthesize_channel(los, {}, 4, 16);
      CHECK(rf::optimal_beam_index(ch, cb, rp) == i);
    }
  }
}

TEST_CASE("zero channel ties resolve to the first beam") {
  auto cb = rf::build_codebook(16, 16);
  rf::ChannelState ch;
  ch.g = Eigen::MatrixXcd::Zero(8, 16);
  rf::RateParams rp;
  CHECK(rf::optimal_beam_index(ch, cb, rp) == 1);
}

TEST_CASE("selected beam is monotone in the line-of-sight direction") {
  auto cb = rf::build_codebook(16, 16);
  rf::RateParams rp;
  int prev = 1;
  for (double az = -1.35; az <= 1.35; az += 0.005) {
    rf::PathSpec los;
    los.gain = 1.0;
    los.azimuth_rad = az;
    auto ch = rf::synthesize_channel(los, {}, 4, 16);
    int idx = rf::optimal_beam_index(ch, cb, rp);
    CHECK(idx >= prev);
    prev = idx;
  }
  CHECK(prev == 16);
}

TEST_CASE("optimal beam agrees with the exhaustive recount on random channels") {
  Rng rng(1234);
  auto cb = rf::build_codebook(16, 16);
  rf::RateParams rp;
  int agree = 0;
  const int trials = 300;
  for (int t = 0; t < trials; t++) {
    rf::PathSpec los;
    los.gain = std::polar(1.0, rng.uniform(0, 2 * M_PI));
    los.azimuth_rad = rng.uniform(-1.4, 1.4);
    std::vector<rf::PathSpec> nlos;
    int n_paths = static_cast<int>(rng.uniform_int(0, 3));
    for (int p = 0; p < n_paths; p++) nlos.push_back(random_path(rng, 0.2));
    auto ch = rf::synthesize_channel(los, nlos, 8, 16, 1e6);
    auto ref = oracle_channel(los, nlos, 8, 16, 1e6);

    int best = 1;
    double best_rate = -1;
    for (int i = 1; i <= 16; i++) {
      std::vector<cplx> w(16);
      for (int n = 0; n < 16; n++) w[n] = std::conj(cb.row(i)(n));
      double r = oracle_rate(ref, w, rp.symbol_power, rp.noise_variance);
      if (r > best_rate) {
        best_rate = r;
        best = i;
      }
    }
    if (rf::optimal_beam_index(ch, cb, rp) == best) agree++;
  }
  CHECK(agree == trials);
}

TEST_CASE("rate gap is zero at the optimum and non-negative elsewhere") {
  Rng rng(5);
  auto cb = rf::build_codebook(16, 16);
  rf::RateParams rp;
  for (int t = 0; t < 20; t++) {
    rf::PathSpec los;
    los.gain = 1.0;
    los.azimuth_rad = rng.uniform(-1.3, 1.3);
    std::vector<rf::PathSpec> nlos = {random_path(rng, 0.2)};
    auto ch = rf::synthesize_channel(los, nlos, 8, 16);
    int best = rf::optimal_beam_index(ch, cb, rp);
    CHECK(rf::rate_gap(ch, cb, best, rp) == 0.0);
    for (int i = 1; i <= 16; i++) CHECK(rf::rate_gap(ch, cb, i, rp) >= 0.0);
  }
}
