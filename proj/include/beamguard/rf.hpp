#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <complex>
#include <stdexcept>
#include <vector>

namespace beamguard::rf {

using cplx = std::complex<double>;

struct PathSpec {
  cplx gain{1.0, 0.0};
  double azimuth_rad = 0.0;
  double elevation_rad = 0.0;
  double delay_s = 0.0;
};

struct RateParams {
  double symbol_power = 1.0;
  double noise_variance = 0.01;
  int num_subcarriers = 8;
  double subcarrier_spacing_hz = 1e6;
};

// half-wavelength ULA steering vector, entries exp(j*pi*n*sin(az)), n = 0..N-1.
// elevation is accepted for interface parity but a horizontal linear array has
// no elevation dependence.
inline Eigen::VectorXcd array_response(double azimuth_rad, double elevation_rad,
                                       int num_antennas) {
  (void)elevation_rad;
  if (num_antennas < 1) throw std::invalid_argument("array_response: need at least one antenna");
  if (!(std::abs(azimuth_rad) < M_PI / 2))
    throw std::domain_error("array_response: azimuth outside (-pi/2, pi/2)");
  Eigen::VectorXcd a(num_antennas);
  double s = std::sin(azimuth_rad);
  for (int n = 0; n < num_antennas; n++) a(n) = std::polar(1.0, M_PI * n * s);
  return a;
}

// oversampled DFT codebook over sin(theta) in [-1, 1); row i (1-based) steers
// at sin(theta_i) = -1 + (2i - 1)/L and is scaled to unit norm. rows are kept
// unconjugated; rate evaluation conjugates them (see beam_weights).
struct BeamCodebook {
  int num_antennas = 0;
  int num_beams = 0;
  Eigen::MatrixXcd rows;         // L x N
  std::vector<double> grid_sin;  // design sin(theta_i), size L

  Eigen::VectorXcd row(int index_1based) const {
    return rows.row(index_1based - 1).transpose();
  }
};

inline BeamCodebook build_codebook(int num_antennas, int num_beams) {
  if (num_antennas < 1 || num_beams < 1)
    throw std::invalid_argument("build_codebook: sizes must be positive");
  BeamCodebook cb;
  cb.num_antennas = num_antennas;
  cb.num_beams = num_beams;
  cb.rows.resize(num_beams, num_antennas);
  cb.grid_sin.resize(num_beams);
  double scale = 1.0 / std::sqrt(static_cast<double>(num_antennas));
  for (int i = 1; i <= num_beams; i++) {
    double s = -1.0 + (2.0 * i - 1.0) / num_beams;
    cb.grid_sin[i - 1] = s;
    for (int n = 0; n < num_antennas; n++)
      cb.rows(i - 1, n) = scale * std::polar(1.0, M_PI * n * s);
  }
  return cb;
}

// the weight vector actually applied for beam i: conjugated codebook row, so
// that g^T w attains sqrt(N)*|gamma| when the channel matches the beam
inline Eigen::VectorXcd beam_weights(const BeamCodebook& cb, int index_1based) {
  if (index_1based < 1 || index_1based > cb.num_beams)
    throw std::invalid_argument("beam_weights: index out of range");
  return cb.row(index_1based).conjugate();
}

struct ChannelState {
  Eigen::MatrixXcd g;  // Q x N, subcarrier q counts from 0
  int num_subcarriers() const { return static_cast<int>(g.rows()); }
  int num_antennas() const { return static_cast<int>(g.cols()); }
};

// g_q = sum_p gamma_p * a(az_p) * exp(-j*2*pi*q*tau_p*df); the line-of-sight
// path must carry zero delay
inline ChannelState synthesize_channel(const PathSpec& los, const std::vector<PathSpec>& nlos,
                                       int num_subcarriers, int num_antennas,
                                       double subcarrier_spacing_hz = 1e6) {
  if (num_subcarriers < 1 || num_antennas < 1)
    throw std::invalid_argument("synthesize_channel: sizes must be positive");
  if (los.delay_s != 0.0)
    throw std::invalid_argument("synthesize_channel: line-of-sight delay must be zero");
  ChannelState ch;
  ch.g = Eigen::MatrixXcd::Zero(num_subcarriers, num_antennas);
  auto add_path = [&](const PathSpec& p) {
    Eigen::VectorXcd a = array_response(p.azimuth_rad, p.elevation_rad, num_antennas);
    for (int q = 0; q < num_subcarriers; q++) {
      cplx phase = std::polar(1.0, -2.0 * M_PI * q * p.delay_s * subcarrier_spacing_hz);
      ch.g.row(q) += (p.gain * phase) * a.transpose();
    }
  };
  add_path(los);
  for (const auto& p : nlos) add_path(p);
  return ch;
}

// (1/Q) * sum_q log2(1 + (P_s/sigma^2) * |g_q^T beam|^2)
inline double average_rate(const ChannelState& ch, const Eigen::VectorXcd& beam,
                           const RateParams& rp) {
  if (beam.size() != ch.g.cols())
    throw std::invalid_argument("average_rate: beam length must match antenna count");
  if (!(rp.symbol_power > 0) || !(rp.noise_variance > 0))
    throw std::invalid_argument("average_rate: powers must be positive");
  double snr = rp.symbol_power / rp.noise_variance;
  double acc = 0;
  for (int q = 0; q < ch.g.rows(); q++) {
    cplx dot = ch.g.row(q) * beam;
    acc += std::log2(1.0 + snr * std::norm(dot));
  }
  return acc / static_cast<double>(ch.g.rows());
}

inline double beam_rate(const ChannelState& ch, const BeamCodebook& cb, int index_1based,
                        const RateParams& rp) {
  return average_rate(ch, beam_weights(cb, index_1based), rp);
}

// exhaustive search; ties resolve to the lowest index
inline int optimal_beam_index(const ChannelState& ch, const BeamCodebook& cb,
                              const RateParams& rp) {
  if (cb.num_beams < 1) throw std::invalid_argument("optimal_beam_index: empty codebook");
  int best = 1;
  double best_rate = beam_rate(ch, cb, 1, rp);
  for (int i = 2; i <= cb.num_beams; i++) {
    double r = beam_rate(ch, cb, i, rp);
    if (r > best_rate) {
      best_rate = r;
      best = i;
    }
  }
  return best;
}

inline double rate_gap(const ChannelState& ch, const BeamCodebook& cb, int chosen_1based,
                       const RateParams& rp) {
  int best = optimal_beam_index(ch, cb, rp);
  return beam_rate(ch, cb, best, rp) - beam_rate(ch, cb, chosen_1based, rp);
}

}  // namespace beamguard::rf
