#pragma once

#include <deque>
#include <span>
#include <string>
#include <vector>

#include "structce/channel.hpp"
#include "structce/phy.hpp"

namespace structce::estimators {

using channel::ChannelGrid;
using channel::TapProcess;
using numerics::CMat;
using numerics::CVec;
using phy::ReceivedGrid;
using phy::Subframe;

/// Channel estimates on the pilot resource elements only. Every stream must
/// cover the same number of pilot subcarriers so values index uniformly as
/// [rx][stream][pilot-symbol][pilot-subcarrier].
struct PilotEstimates {
  int nr = 0, nt = 0;
  std::vector<int> pilot_symbols;                  // grid symbol indices
  std::vector<std::vector<int>> pilot_subcarriers; // per stream, ascending
  std::vector<cd> v;

  int num_pilot_symbols() const { return static_cast<int>(pilot_symbols.size()); }
  int num_pilot_subcarriers() const {
    return pilot_subcarriers.empty() ? 0 : static_cast<int>(pilot_subcarriers[0].size());
  }
  std::size_t index(int r, int s, int ti, int ki) const {
    return ((static_cast<std::size_t>(r) * nt + s) * num_pilot_symbols() + ti) *
               num_pilot_subcarriers() +
           ki;
  }
  cd& at(int r, int s, int ti, int ki) { return v[index(r, s, ti, ki)]; }
  const cd& at(int r, int s, int ti, int ki) const { return v[index(r, s, ti, ki)]; }

  static PilotEstimates zeros(int nr, int nt, std::vector<int> pilot_symbols,
                              std::vector<std::vector<int>> pilot_subcarriers);
};

/// Per-RE division y/x on each stream's own pilot comb. Orthogonal subframes
/// only; a zero pilot symbol raises std::invalid_argument.
PilotEstimates ls_estimate(const ReceivedGrid& y, const Subframe& subframe);

/// Per-subcarrier least squares over the pilot symbols stacked in time
/// (quasi-static channel assumption), non-orthogonal subframes only. The
/// per-subcarrier solution is replicated at every pilot symbol index.
/// Throws SingularMatrixError when the stacked pilot matrix is rank-deficient.
PilotEstimates stacked_ls(const ReceivedGrid& y, const Subframe& subframe);

/// Noise-variance estimate from the residual of the per-subcarrier
/// time-stacked least-squares fit on pilot REs (works for both pilot
/// schemes; the orthogonal comb reduces to a one-unknown fit per stream).
/// Throws std::invalid_argument when no residual degrees of freedom exist.
double estimate_noise_var(const ReceivedGrid& y, const Subframe& subframe);

/// Linear interpolation in frequency across pilot subcarriers, then in time
/// across pilot symbols; constant hold beyond the outermost pilots.
ChannelGrid interpolate_grid(const PilotEstimates& pilots, int T, int K);

struct CorrelationModel {
  enum class Provenance { kEmpirical, kGenie };
  CMat r;
  Provenance provenance = Provenance::kEmpirical;
};

/// Sample frequency-correlation matrix (1/N) sum h h^H over all pilot
/// symbols and (rx, tx) pairs of the most recent `window` subframes,
/// Hermitian-symmetrized with 1e-6 diagonal loading.
CorrelationModel empirical_corr(std::span<const PilotEstimates> history, int window);

/// Closed-form frequency correlation of a power-delay profile evaluated on
/// the given subcarrier indices: R[i][j] = sum_p P_p e^{-j2pi(k_i-k_j) df tau_p}.
CorrelationModel genie_corr(const TapProcess& taps, double subcarrier_spacing_hz,
                            const std::vector<int>& subcarriers);

/// Wiener filtering along frequency, per (rx, stream, pilot symbol):
/// h_out = R (R + (sigma2/pilot_power) I)^-1 h_in. Identity at sigma2 = 0.
PilotEstimates lmmse_filter(const PilotEstimates& pilots, const CorrelationModel& corr,
                            double sigma2, double pilot_power);

/// A full-grid estimate with its pilot-domain intermediate and method tag.
struct ChannelEstimate {
  ChannelGrid grid;
  std::string method;
  PilotEstimates pilots;
  double sigma2_est = 0.0;
};

ChannelEstimate assemble_estimate(PilotEstimates pilots, std::string method, int T, int K,
                                  double sigma2_est);

/// NMSE in dB restricted to the estimate's own pilot REs (same -300 dB
/// sentinel convention as phy::nmse_db).
double nmse_pilot_db(const ChannelEstimate& est, const ChannelGrid& truth);

/// Sliding window of per-subframe LS pilot estimates feeding empirical_corr.
class EmLmmseHistory {
 public:
  explicit EmLmmseHistory(int window) : window_(window) {}
  void push(PilotEstimates estimates);
  std::span<const PilotEstimates> view() const { return {buffer_.data(), buffer_.size()}; }
  int window() const { return window_; }

 private:
  int window_;
  std::vector<PilotEstimates> buffer_;
};

}  // namespace structce::estimators
