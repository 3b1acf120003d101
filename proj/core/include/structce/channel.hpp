#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "structce/numerics.hpp"

namespace structce::channel {

using numerics::RngStream;

/// Speed of light in m/s.
inline constexpr double kSpeedOfLight = 299792458.0;

inline double kmh_to_mps(double kmh) { return kmh / 3.6; }

/// Maximum Doppler shift f_D = v * f_c / c.
double doppler_hz(double speed_mps, double carrier_hz);

struct ChannelConfig {
  int nt = 2;   // transmit antennas / streams
  int nr = 2;   // receive antennas
  int num_taps = 8;
  double delay_spread_s = 100e-9;       // RMS delay spread of the exponential profile
  double carrier_hz = 3.5e9;
  double speed_mps = 5.0 / 3.6;         // 5 km/h
  double subcarrier_spacing_hz = 15e3;
  int num_subcarriers = 1024;
  int symbols_per_subframe = 14;
  double symbol_duration_s = 1.0 / 15e3;
  int num_sinusoids = 32;               // sum-of-sinusoids order per tap

  /// Throws std::invalid_argument on any out-of-range field.
  void validate() const;
};

/// One subframe's worth of sum-of-sinusoids fading state: per (rx, tx, tap)
/// a set of sinusoid arrival-angle cosines and phases, plus the shared
/// power-delay profile. E|g_p(t)|^2 = P_p and the taps are wide-sense
/// stationary in t.
struct TapProcess {
  int nr = 0;
  int nt = 0;
  int num_sinusoids = 0;
  double doppler = 0.0;            // max Doppler shift, Hz
  std::vector<double> powers;      // P_p, sums to 1
  std::vector<double> delays;      // tau_p, seconds
  std::vector<double> cos_aoa;     // [r][c][p][n] cos of arrival angles
  std::vector<double> phases;      // [r][c][p][n]

  int num_taps() const { return static_cast<int>(powers.size()); }
  /// Complex gain of tap p between rx r and tx c at absolute time t.
  cd gain(int r, int c, int p, double t) const;
};

/// Dense (t, k) grid of nr x nt complex matrices, column-major per block.
struct ChannelGrid {
  int T = 0, K = 0, nr = 0, nt = 0;
  std::vector<cd> h;

  static ChannelGrid zeros(int T, int K, int nr, int nt);

  cd* block(int t, int k) { return h.data() + (static_cast<std::size_t>(t) * K + k) * nr * nt; }
  const cd* block(int t, int k) const {
    return h.data() + (static_cast<std::size_t>(t) * K + k) * nr * nt;
  }
  Eigen::Map<numerics::CMat> at(int t, int k) {
    return Eigen::Map<numerics::CMat>(block(t, k), nr, nt);
  }
  Eigen::Map<const numerics::CMat> at(int t, int k) const {
    return Eigen::Map<const numerics::CMat>(block(t, k), nr, nt);
  }
  cd& at(int t, int k, int r, int c) { return block(t, k)[c * nr + r]; }
  const cd& at(int t, int k, int r, int c) const { return block(t, k)[c * nr + r]; }
};

/// Ground-truth channel over one subframe plus the configuration and seed
/// identifiers it was generated from.
struct ChannelRealization {
  ChannelGrid grid;
  ChannelConfig cfg;
  std::uint64_t master_seed = 0;
  std::uint64_t stream_id = 0;
};

/// Draws tap processes: exponential power-delay profile on uniformly spaced
/// delays (spacing delay_spread/2), Clarke sum-of-sinusoids per tap with
/// uniformly random arrival angles and phases.
TapProcess generate_taps(const ChannelConfig& cfg, RngStream& rng);

/// Frequency-domain grid H[t][k](r,c) = sum_p g_{r,c,p}(t*T_sym) e^{-j2pi k df tau_p}.
/// Block fading: the channel is sampled once per OFDM symbol.
ChannelRealization realize(const TapProcess& taps, const ChannelConfig& cfg);

/// CSV export, one row per coefficient: t,k,rx,tx,re,im.
void export_grid_csv(const ChannelGrid& grid, std::ostream& out);

/// Closed-form frequency correlation of the profile at subcarrier lag d:
/// sum_p P_p e^{-j2pi d df tau_p}.
cd frequency_correlation(const TapProcess& taps, double subcarrier_spacing_hz, int lag);

}  // namespace structce::channel
