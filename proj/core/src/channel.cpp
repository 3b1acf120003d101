#include "structce/channel.hpp"

#include <cmath>
#include <ostream>
#include <stdexcept>

namespace structce::channel {

double doppler_hz(double speed_mps, double carrier_hz) {
  return speed_mps * carrier_hz / kSpeedOfLight;
}

void ChannelConfig::validate() const {
  if (nt < 1 || nt > 8 || nr < 1 || nr > 8) {
    throw std::invalid_argument("ChannelConfig: antenna counts must be in 1..8");
  }
  if (num_taps < 1) throw std::invalid_argument("ChannelConfig: num_taps must be >= 1");
  if (!(delay_spread_s > 0)) throw std::invalid_argument("ChannelConfig: delay_spread_s must be > 0");
  if (!(carrier_hz > 0)) throw std::invalid_argument("ChannelConfig: carrier_hz must be > 0");
  if (speed_mps < 0) throw std::invalid_argument("ChannelConfig: speed_mps must be >= 0");
  if (!(subcarrier_spacing_hz > 0)) {
    throw std::invalid_argument("ChannelConfig: subcarrier_spacing_hz must be > 0");
  }
  if (num_subcarriers < 1) throw std::invalid_argument("ChannelConfig: num_subcarriers must be >= 1");
  if (symbols_per_subframe < 1) {
    throw std::invalid_argument("ChannelConfig: symbols_per_subframe must be >= 1");
  }
  if (!(symbol_duration_s > 0)) {
    throw std::invalid_argument("ChannelConfig: symbol_duration_s must be > 0");
  }
  if (num_sinusoids < 1) throw std::invalid_argument("ChannelConfig: num_sinusoids must be >= 1");
}

cd TapProcess::gain(int r, int c, int p, double t) const {
  const std::size_t base =
      ((static_cast<std::size_t>(r) * nt + c) * powers.size() + p) * num_sinusoids;
  const double w = 2.0 * M_PI * doppler * t;
  double re = 0.0, im = 0.0;
  for (int n = 0; n < num_sinusoids; ++n) {
    double arg = w * cos_aoa[base + n] + phases[base + n];
    re += std::cos(arg);
    im += std::sin(arg);
  }
  double scale = std::sqrt(powers[p] / num_sinusoids);
  return {scale * re, scale * im};
}

ChannelGrid ChannelGrid::zeros(int T, int K, int nr, int nt) {
  ChannelGrid g;
  g.T = T;
  g.K = K;
  g.nr = nr;
  g.nt = nt;
  g.h.assign(static_cast<std::size_t>(T) * K * nr * nt, cd{0.0, 0.0});
  return g;
}

TapProcess generate_taps(const ChannelConfig& cfg, RngStream& rng) {
  cfg.validate();
  TapProcess taps;
  taps.nr = cfg.nr;
  taps.nt = cfg.nt;
  taps.num_sinusoids = cfg.num_sinusoids;
  taps.doppler = doppler_hz(cfg.speed_mps, cfg.carrier_hz);

  const int P = cfg.num_taps;
  taps.powers.resize(P);
  taps.delays.resize(P);
  const double spacing = cfg.delay_spread_s / 2.0;
  double total = 0.0;
  for (int p = 0; p < P; ++p) {
    taps.delays[p] = p * spacing;
    taps.powers[p] = std::exp(-taps.delays[p] / cfg.delay_spread_s);
    total += taps.powers[p];
  }
  for (int p = 0; p < P; ++p) taps.powers[p] /= total;

  const std::size_t n = static_cast<std::size_t>(cfg.nr) * cfg.nt * P * cfg.num_sinusoids;
  taps.cos_aoa.resize(n);
  taps.phases.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    taps.cos_aoa[i] = std::cos(2.0 * M_PI * rng.next_double());
    taps.phases[i] = 2.0 * M_PI * rng.next_double();
  }
  return taps;
}

ChannelRealization realize(const TapProcess& taps, const ChannelConfig& cfg) {
  cfg.validate();
  if (taps.nr != cfg.nr || taps.nt != cfg.nt) {
    throw std::invalid_argument("realize: tap process dimensions do not match config");
  }
  const int T = cfg.symbols_per_subframe;
  const int K = cfg.num_subcarriers;
  const int P = taps.num_taps();

  ChannelRealization out;
  out.grid = ChannelGrid::zeros(T, K, cfg.nr, cfg.nt);
  out.cfg = cfg;

  // Per-(k, p) subcarrier phase ramps are shared across t, r, c.
  std::vector<cd> ramp(static_cast<std::size_t>(K) * P);
  for (int k = 0; k < K; ++k) {
    for (int p = 0; p < P; ++p) {
      double arg = -2.0 * M_PI * k * cfg.subcarrier_spacing_hz * taps.delays[p];
      ramp[static_cast<std::size_t>(k) * P + p] = {std::cos(arg), std::sin(arg)};
    }
  }

  std::vector<cd> gains(P);
  for (int t = 0; t < T; ++t) {
    const double time = t * cfg.symbol_duration_s;
    for (int c = 0; c < cfg.nt; ++c) {
      for (int r = 0; r < cfg.nr; ++r) {
        for (int p = 0; p < P; ++p) gains[p] = taps.gain(r, c, p, time);
        for (int k = 0; k < K; ++k) {
          const cd* rk = &ramp[static_cast<std::size_t>(k) * P];
          cd acc{0.0, 0.0};
          for (int p = 0; p < P; ++p) acc += gains[p] * rk[p];
          out.grid.at(t, k, r, c) = acc;
        }
      }
    }
  }
  return out;
}

void export_grid_csv(const ChannelGrid& grid, std::ostream& out) {
  out << "t,k,rx,tx,re,im\n";
  char buf[128];
  for (int t = 0; t < grid.T; ++t) {
    for (int k = 0; k < grid.K; ++k) {
      for (int r = 0; r < grid.nr; ++r) {
        for (int c = 0; c < grid.nt; ++c) {
          const cd v = grid.at(t, k, r, c);
          std::snprintf(buf, sizeof(buf), "%d,%d,%d,%d,%.17g,%.17g\n", t, k, r, c, v.real(),
                        v.imag());
          out << buf;
        }
      }
    }
  }
}

cd frequency_correlation(const TapProcess& taps, double subcarrier_spacing_hz, int lag) {
  cd acc{0.0, 0.0};
  for (int p = 0; p < taps.num_taps(); ++p) {
    double arg = -2.0 * M_PI * lag * subcarrier_spacing_hz * taps.delays[p];
    acc += taps.powers[p] * cd{std::cos(arg), std::sin(arg)};
  }
  return acc;
}

}  // namespace structce::channel
