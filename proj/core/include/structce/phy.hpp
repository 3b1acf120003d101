#pragma once

#include <cstdint>
#include <vector>

#include "structce/channel.hpp"
#include "structce/numerics.hpp"

namespace structce::phy {

using channel::ChannelGrid;
using channel::ChannelRealization;
using numerics::RngStream;

/// Square QAM with per-dimension amplitude ladder {±a, ±3a, ...} and the
/// bit-to-level rule v = sum_l a * 2^(m-1-l) * b_l, b_l in {±1}. Unit average
/// symbol energy; the point set is invariant under multiplication by j.
struct ModulationScheme {
  int order = 4;          // M
  int bits_per_dim = 1;   // m = log2(sqrt(M))
  double base_amp = 0.0;  // a

  static ModulationScheme qpsk();
  static ModulationScheme qam16();
  /// M in {4, 16}, otherwise std::invalid_argument.
  static ModulationScheme from_order(int m);

  /// All M constellation points, real-dimension bits in the outer loop.
  std::vector<cd> constellation() const;
};

/// Per-dimension level from sign bits, most significant level first.
double level_from_bits(const std::vector<int>& bits, const ModulationScheme& mod);
/// Symbol from per-dimension bit vectors (each of length bits_per_dim).
cd map_bits(const std::vector<int>& re_bits, const std::vector<int>& im_bits,
            const ModulationScheme& mod);

/// Successive sign rule b_l = sign(v - sum_{l'<l} a 2^(m-1-l') b_l'), no
/// validation; this is also the hard demapper for noisy levels.
std::vector<int> demap_level(double v, const ModulationScheme& mod);
/// Exact inverse of map_bits; throws std::invalid_argument unless the symbol
/// reconstructs within 1e-9.
struct BitPair {
  std::vector<int> re_bits;
  std::vector<int> im_bits;
};
BitPair bit_decompose(cd symbol, const ModulationScheme& mod);

enum class PilotScheme {
  kOrthogonal,     // streams comb-multiplexed in frequency on pilot symbols
  kNonOrthogonal,  // all streams transmit pilots on every subcarrier
};

struct SubframeConfig {
  int num_subcarriers = 1024;
  int symbols_per_subframe = 14;
  std::vector<int> pilot_symbols = {2, 5, 8, 11};
  PilotScheme pilot_scheme = PilotScheme::kNonOrthogonal;
  ModulationScheme modulation = ModulationScheme::qpsk();
  int num_streams = 2;

  void validate() const;
  bool is_pilot_symbol(int t) const;
  int num_pilot_symbols() const { return static_cast<int>(pilot_symbols.size()); }
  int num_data_symbols() const { return symbols_per_subframe - num_pilot_symbols(); }
};

/// Transmitted grid: pilots per the configured scheme, uniformly random data
/// symbols on every stream of every data symbol. Pilots are unit-magnitude
/// QPSK points known to the receiver. data_bits holds the payload per stream
/// as 0/1 bytes in (t, k, re-dim levels, im-dim levels) order over data REs.
struct Subframe {
  SubframeConfig cfg;
  std::vector<cd> x;                      // (t, k, stream)
  std::vector<std::uint8_t> pilot_mask;   // (t, k, stream), 1 = active pilot
  std::vector<std::vector<std::uint8_t>> data_bits;

  cd tx(int t, int k, int s) const {
    return x[(static_cast<std::size_t>(t) * cfg.num_subcarriers + k) * cfg.num_streams + s];
  }
  bool is_pilot(int t, int k, int s) const {
    return pilot_mask[(static_cast<std::size_t>(t) * cfg.num_subcarriers + k) * cfg.num_streams +
                      s] != 0;
  }
  /// Subcarriers on which stream s transmits pilots.
  std::vector<int> pilot_subcarriers(int s) const;
};

Subframe build_subframe(const SubframeConfig& cfg, RngStream& payload_rng, RngStream& pilot_rng);

/// Noise variance per receive antenna for a target SNR, with unit-power
/// symbols on num_streams streams and unit average channel gain:
/// sigma^2 = num_streams * 10^(-snr_db/10).
double noise_var_from_snr(double snr_db, int num_streams);

struct ReceivedGrid {
  int T = 0, K = 0, nr = 0;
  std::vector<cd> y;  // (t, k, rx)
  double noise_var = 0.0;

  cd* at(int t, int k) { return y.data() + (static_cast<std::size_t>(t) * K + k) * nr; }
  const cd* at(int t, int k) const {
    return y.data() + (static_cast<std::size_t>(t) * K + k) * nr;
  }
};

/// Y[t][k] = H[t][k] X[t][k] + n, n circularly symmetric complex Gaussian
/// with variance sigma^2 per receive antenna. No noise is drawn at 0 variance.
ReceivedGrid transmit(const Subframe& subframe, const ChannelRealization& realization,
                      double snr_db, RngStream& noise_rng);

/// Per-RE MMSE equalizer x_hat = (H^H H + sigma^2 I)^-1 H^H y over the whole
/// grid. Throws SingularMatrixError if the regularized matrix is singular
/// (possible only at sigma^2 = 0).
std::vector<cd> mmse_equalize(const ReceivedGrid& y, const ChannelGrid& h_est, double sigma2);

/// Hard-demaps equalized data REs into per-stream bits in Subframe payload order.
std::vector<std::vector<std::uint8_t>> demap_data_bits(const std::vector<cd>& xhat,
                                                       const SubframeConfig& cfg);

/// 10 log10(sum ||est-truth||_F^2 / sum ||truth||_F^2); values below -300 dB
/// (including an exact match) are reported as the -300 sentinel. Throws
/// std::invalid_argument when the truth grid has zero norm.
double nmse_db(const ChannelGrid& est, const ChannelGrid& truth);

/// Fraction of differing bits; lengths must match.
double ber(const std::vector<std::uint8_t>& tx_bits, const std::vector<std::uint8_t>& rx_bits);

}  // namespace structce::phy
