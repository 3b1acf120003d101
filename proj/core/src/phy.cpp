#include "structce/phy.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace structce::phy {

ModulationScheme ModulationScheme::qpsk() { return {4, 1, 1.0 / std::sqrt(2.0)}; }
ModulationScheme ModulationScheme::qam16() { return {16, 2, 1.0 / std::sqrt(10.0)}; }

ModulationScheme ModulationScheme::from_order(int m) {
  if (m == 4) return qpsk();
  if (m == 16) return qam16();
  throw std::invalid_argument("ModulationScheme: order must be 4 or 16");
}

std::vector<cd> ModulationScheme::constellation() const {
  const int levels = 1 << bits_per_dim;
  std::vector<double> amp(levels);
  for (int i = 0; i < levels; ++i) {
    std::vector<int> bits(bits_per_dim);
    for (int l = 0; l < bits_per_dim; ++l) bits[l] = (i >> (bits_per_dim - 1 - l)) & 1 ? 1 : -1;
    amp[i] = level_from_bits(bits, *this);
  }
  std::vector<cd> points;
  points.reserve(static_cast<std::size_t>(levels) * levels);
  for (int i = 0; i < levels; ++i) {
    for (int q = 0; q < levels; ++q) points.emplace_back(amp[i], amp[q]);
  }
  return points;
}

double level_from_bits(const std::vector<int>& bits, const ModulationScheme& mod) {
  if (static_cast<int>(bits.size()) != mod.bits_per_dim) {
    throw std::invalid_argument("level_from_bits: wrong bit count");
  }
  double v = 0.0;
  for (int l = 0; l < mod.bits_per_dim; ++l) {
    if (bits[l] != 1 && bits[l] != -1) {
      throw std::invalid_argument("level_from_bits: bits must be +1 or -1");
    }
    v += mod.base_amp * static_cast<double>(1 << (mod.bits_per_dim - 1 - l)) * bits[l];
  }
  return v;
}

cd map_bits(const std::vector<int>& re_bits, const std::vector<int>& im_bits,
            const ModulationScheme& mod) {
  return {level_from_bits(re_bits, mod), level_from_bits(im_bits, mod)};
}

std::vector<int> demap_level(double v, const ModulationScheme& mod) {
  std::vector<int> bits(mod.bits_per_dim);
  double rem = v;
  for (int l = 0; l < mod.bits_per_dim; ++l) {
    bits[l] = rem >= 0.0 ? 1 : -1;
    rem -= mod.base_amp * static_cast<double>(1 << (mod.bits_per_dim - 1 - l)) * bits[l];
  }
  return bits;
}

BitPair bit_decompose(cd symbol, const ModulationScheme& mod) {
  BitPair out;
  out.re_bits = demap_level(symbol.real(), mod);
  out.im_bits = demap_level(symbol.imag(), mod);
  cd rebuilt = map_bits(out.re_bits, out.im_bits, mod);
  if (std::abs(rebuilt - symbol) > 1e-9) {
    throw std::invalid_argument("bit_decompose: symbol is not a constellation point");
  }
  return out;
}

void SubframeConfig::validate() const {
  if (num_subcarriers < 1) throw std::invalid_argument("SubframeConfig: need >= 1 subcarrier");
  if (symbols_per_subframe < 1) throw std::invalid_argument("SubframeConfig: need >= 1 symbol");
  if (num_streams < 1 || num_streams > 8) {
    throw std::invalid_argument("SubframeConfig: num_streams must be in 1..8");
  }
  if (pilot_symbols.empty()) throw std::invalid_argument("SubframeConfig: need pilot symbols");
  if (static_cast<int>(pilot_symbols.size()) > symbols_per_subframe) {
    throw std::invalid_argument("SubframeConfig: too many pilot symbols");
  }
  int prev = -1;
  for (int t : pilot_symbols) {
    if (t < 0 || t >= symbols_per_subframe) {
      throw std::invalid_argument("SubframeConfig: pilot symbol out of range");
    }
    if (t <= prev) throw std::invalid_argument("SubframeConfig: pilot symbols must be ascending");
    prev = t;
  }
  if (pilot_scheme == PilotScheme::kOrthogonal && num_subcarriers % num_streams != 0) {
    throw std::invalid_argument(
        "SubframeConfig: orthogonal combs need num_subcarriers divisible by num_streams");
  }
}

bool SubframeConfig::is_pilot_symbol(int t) const {
  return std::find(pilot_symbols.begin(), pilot_symbols.end(), t) != pilot_symbols.end();
}

std::vector<int> Subframe::pilot_subcarriers(int s) const {
  std::vector<int> out;
  if (cfg.pilot_scheme == PilotScheme::kNonOrthogonal) {
    out.resize(cfg.num_subcarriers);
    for (int k = 0; k < cfg.num_subcarriers; ++k) out[k] = k;
  } else {
    for (int k = s; k < cfg.num_subcarriers; k += cfg.num_streams) out.push_back(k);
  }
  return out;
}

namespace {

cd draw_qpsk_pilot(RngStream& rng) {
  const double a = 1.0 / std::sqrt(2.0);
  std::uint64_t u = rng.next_u64();
  return {(u & 1) ? a : -a, (u & 2) ? a : -a};
}

// Pseudo-random QPSK pilot block for one subcarrier of a non-orthogonal
// subframe, one row per pilot symbol and one column per stream. Random QPSK
// columns are exactly collinear with probability 4^(1-Tp) per stream pair;
// such draws are rejected so the stacked per-subcarrier system stays
// exactly determined.
numerics::CMat draw_pilot_block(int tp, int nt, RngStream& rng) {
  numerics::CMat block(tp, nt);
  for (int attempt = 0; attempt < 64; ++attempt) {
    for (int ti = 0; ti < tp; ++ti) {
      for (int s = 0; s < nt; ++s) block(ti, s) = draw_qpsk_pilot(rng);
    }
    if (nt == 1 || tp < nt) return block;
    Eigen::ColPivHouseholderQR<numerics::CMat> qr(block);
    if (qr.rank() == nt) return block;
  }
  throw std::runtime_error("build_subframe: could not draw a full-rank pilot block");
}

}  // namespace

Subframe build_subframe(const SubframeConfig& cfg, RngStream& payload_rng, RngStream& pilot_rng) {
  cfg.validate();
  const int K = cfg.num_subcarriers;
  const int T = cfg.symbols_per_subframe;
  const int nt = cfg.num_streams;
  const int m = cfg.modulation.bits_per_dim;
  const int tp = cfg.num_pilot_symbols();

  Subframe sf;
  sf.cfg = cfg;
  sf.x.assign(static_cast<std::size_t>(T) * K * nt, cd{0.0, 0.0});
  sf.pilot_mask.assign(sf.x.size(), 0);
  sf.data_bits.assign(nt, {});
  for (auto& bits : sf.data_bits) {
    bits.reserve(static_cast<std::size_t>(cfg.num_data_symbols()) * K * 2 * m);
  }

  // Pilot values first (subcarrier-major for the non-orthogonal scheme so a
  // rejected block only redraws its own subcarrier).
  if (cfg.pilot_scheme == PilotScheme::kNonOrthogonal) {
    for (int k = 0; k < K; ++k) {
      const numerics::CMat block = draw_pilot_block(tp, nt, pilot_rng);
      for (int ti = 0; ti < tp; ++ti) {
        const int t = cfg.pilot_symbols[ti];
        for (int s = 0; s < nt; ++s) {
          const std::size_t idx = (static_cast<std::size_t>(t) * K + k) * nt + s;
          sf.x[idx] = block(ti, s);
          sf.pilot_mask[idx] = 1;
        }
      }
    }
  } else {
    for (int t : cfg.pilot_symbols) {
      for (int k = 0; k < K; ++k) {
        const int s = k % nt;
        const std::size_t idx = (static_cast<std::size_t>(t) * K + k) * nt + s;
        sf.x[idx] = draw_qpsk_pilot(pilot_rng);
        sf.pilot_mask[idx] = 1;
      }
    }
  }

  std::vector<int> re_bits(m), im_bits(m);
  for (int t = 0; t < T; ++t) {
    if (cfg.is_pilot_symbol(t)) continue;
    for (int k = 0; k < K; ++k) {
      for (int s = 0; s < nt; ++s) {
        const std::size_t idx = (static_cast<std::size_t>(t) * K + k) * nt + s;
        std::uint64_t u = payload_rng.next_u64();
        for (int l = 0; l < m; ++l) {
          re_bits[l] = (u >> l) & 1 ? 1 : -1;
          im_bits[l] = (u >> (m + l)) & 1 ? 1 : -1;
        }
        sf.x[idx] = map_bits(re_bits, im_bits, cfg.modulation);
        for (int l = 0; l < m; ++l) sf.data_bits[s].push_back(re_bits[l] > 0 ? 1 : 0);
        for (int l = 0; l < m; ++l) sf.data_bits[s].push_back(im_bits[l] > 0 ? 1 : 0);
      }
    }
  }
  return sf;
}

double noise_var_from_snr(double snr_db, int num_streams) {
  if (num_streams < 1) throw std::invalid_argument("noise_var_from_snr: num_streams must be >= 1");
  return num_streams * std::pow(10.0, -snr_db / 10.0);
}

ReceivedGrid transmit(const Subframe& subframe, const ChannelRealization& realization,
                      double snr_db, RngStream& noise_rng) {
  const auto& cfg = subframe.cfg;
  const auto& grid = realization.grid;
  if (grid.T != cfg.symbols_per_subframe || grid.K != cfg.num_subcarriers ||
      grid.nt != cfg.num_streams) {
    throw std::invalid_argument("transmit: channel and subframe dimensions disagree");
  }
  const int K = cfg.num_subcarriers;
  const int T = cfg.symbols_per_subframe;
  const int nr = grid.nr;
  const int nt = grid.nt;
  const double sigma2 = noise_var_from_snr(snr_db, nt);

  ReceivedGrid out;
  out.T = T;
  out.K = K;
  out.nr = nr;
  out.noise_var = sigma2;
  out.y.assign(static_cast<std::size_t>(T) * K * nr, cd{0.0, 0.0});

  for (int t = 0; t < T; ++t) {
    for (int k = 0; k < K; ++k) {
      const cd* h = grid.block(t, k);
      const cd* x = &subframe.x[(static_cast<std::size_t>(t) * K + k) * nt];
      cd* y = out.at(t, k);
      for (int c = 0; c < nt; ++c) {
        const cd xc = x[c];
        if (xc == cd{0.0, 0.0}) continue;
        for (int r = 0; r < nr; ++r) y[r] += h[c * nr + r] * xc;
      }
      if (sigma2 > 0.0) {
        for (int r = 0; r < nr; ++r) y[r] += noise_rng.next_cgaussian(sigma2);
      }
    }
  }
  return out;
}

std::vector<cd> mmse_equalize(const ReceivedGrid& y, const ChannelGrid& h_est, double sigma2) {
  if (y.T != h_est.T || y.K != h_est.K || y.nr != h_est.nr) {
    throw std::invalid_argument("mmse_equalize: dimension mismatch");
  }
  if (sigma2 < 0) throw std::invalid_argument("mmse_equalize: sigma2 must be >= 0");
  const int nt = h_est.nt;
  const int nr = h_est.nr;

  std::vector<cd> xhat(static_cast<std::size_t>(y.T) * y.K * nt);
  numerics::CMat a(nt, nt);
  numerics::CVec rhs(nt);
  Eigen::LLT<numerics::CMat> llt(nt);
  for (int t = 0; t < y.T; ++t) {
    for (int k = 0; k < y.K; ++k) {
      auto h = h_est.at(t, k);
      Eigen::Map<const numerics::CVec> yv(y.at(t, k), nr);
      a.noalias() = h.adjoint() * h;
      for (int i = 0; i < nt; ++i) a(i, i) += sigma2;
      rhs.noalias() = h.adjoint() * yv;
      llt.compute(a);
      if (llt.info() != Eigen::Success) {
        throw SingularMatrixError("mmse_equalize: singular regularized matrix");
      }
      Eigen::Map<numerics::CVec>(&xhat[(static_cast<std::size_t>(t) * y.K + k) * nt], nt) =
          llt.solve(rhs);
    }
  }
  return xhat;
}

std::vector<std::vector<std::uint8_t>> demap_data_bits(const std::vector<cd>& xhat,
                                                       const SubframeConfig& cfg) {
  const int K = cfg.num_subcarriers;
  const int nt = cfg.num_streams;
  if (xhat.size() != static_cast<std::size_t>(cfg.symbols_per_subframe) * K * nt) {
    throw std::invalid_argument("demap_data_bits: grid size mismatch");
  }
  std::vector<std::vector<std::uint8_t>> bits(nt);
  for (int t = 0; t < cfg.symbols_per_subframe; ++t) {
    if (cfg.is_pilot_symbol(t)) continue;
    for (int k = 0; k < K; ++k) {
      for (int s = 0; s < nt; ++s) {
        const cd v = xhat[(static_cast<std::size_t>(t) * K + k) * nt + s];
        for (int b : demap_level(v.real(), cfg.modulation)) bits[s].push_back(b > 0 ? 1 : 0);
        for (int b : demap_level(v.imag(), cfg.modulation)) bits[s].push_back(b > 0 ? 1 : 0);
      }
    }
  }
  return bits;
}

double nmse_db(const ChannelGrid& est, const ChannelGrid& truth) {
  if (est.T != truth.T || est.K != truth.K || est.nr != truth.nr || est.nt != truth.nt) {
    throw std::invalid_argument("nmse_db: grid shapes differ");
  }
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < truth.h.size(); ++i) {
    num += std::norm(est.h[i] - truth.h[i]);
    den += std::norm(truth.h[i]);
  }
  if (den == 0.0) throw std::invalid_argument("nmse_db: truth grid has zero norm");
  if (num == 0.0) return -300.0;
  return std::max(10.0 * std::log10(num / den), -300.0);
}

double ber(const std::vector<std::uint8_t>& tx_bits, const std::vector<std::uint8_t>& rx_bits) {
  if (tx_bits.size() != rx_bits.size()) {
    throw std::invalid_argument("ber: bit vectors must have equal length");
  }
  if (tx_bits.empty()) throw std::invalid_argument("ber: empty bit vectors");
  std::size_t diff = 0;
  for (std::size_t i = 0; i < tx_bits.size(); ++i) diff += tx_bits[i] != rx_bits[i];
  return static_cast<double>(diff) / static_cast<double>(tx_bits.size());
}

}  // namespace structce::phy
