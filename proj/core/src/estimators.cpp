#include "structce/estimators.hpp"

#include <cmath>
#include <stdexcept>

namespace structce::estimators {

PilotEstimates PilotEstimates::zeros(int nr, int nt, std::vector<int> pilot_symbols,
                                     std::vector<std::vector<int>> pilot_subcarriers) {
  PilotEstimates p;
  p.nr = nr;
  p.nt = nt;
  p.pilot_symbols = std::move(pilot_symbols);
  p.pilot_subcarriers = std::move(pilot_subcarriers);
  if (static_cast<int>(p.pilot_subcarriers.size()) != nt) {
    throw std::invalid_argument("PilotEstimates: need one subcarrier list per stream");
  }
  const std::size_t kp = p.pilot_subcarriers[0].size();
  for (const auto& list : p.pilot_subcarriers) {
    if (list.size() != kp) {
      throw std::invalid_argument("PilotEstimates: streams must cover equal pilot counts");
    }
  }
  p.v.assign(static_cast<std::size_t>(nr) * nt * p.pilot_symbols.size() * kp, cd{0.0, 0.0});
  return p;
}

PilotEstimates ls_estimate(const ReceivedGrid& y, const Subframe& subframe) {
  const auto& cfg = subframe.cfg;
  if (cfg.pilot_scheme != phy::PilotScheme::kOrthogonal) {
    throw std::invalid_argument("ls_estimate: requires orthogonal pilots");
  }
  const int nt = cfg.num_streams;
  std::vector<std::vector<int>> combs(nt);
  for (int s = 0; s < nt; ++s) combs[s] = subframe.pilot_subcarriers(s);
  auto est = PilotEstimates::zeros(y.nr, nt, cfg.pilot_symbols, combs);

  for (int ti = 0; ti < est.num_pilot_symbols(); ++ti) {
    const int t = cfg.pilot_symbols[ti];
    for (int s = 0; s < nt; ++s) {
      for (int ki = 0; ki < est.num_pilot_subcarriers(); ++ki) {
        const int k = est.pilot_subcarriers[s][ki];
        const cd x = subframe.tx(t, k, s);
        if (x == cd{0.0, 0.0}) throw std::invalid_argument("ls_estimate: zero pilot symbol");
        const cd* yv = y.at(t, k);
        for (int r = 0; r < y.nr; ++r) est.at(r, s, ti, ki) = yv[r] / x;
      }
    }
  }
  return est;
}

namespace {

// Stacked pilot matrix for subcarrier k: one row per pilot symbol, one
// column per active stream.
numerics::CMat pilot_matrix(const Subframe& subframe, int k, const std::vector<int>& streams) {
  const auto& cfg = subframe.cfg;
  numerics::CMat a(cfg.pilot_symbols.size(), streams.size());
  for (std::size_t ti = 0; ti < cfg.pilot_symbols.size(); ++ti) {
    for (std::size_t si = 0; si < streams.size(); ++si) {
      a(ti, si) = subframe.tx(cfg.pilot_symbols[ti], k, streams[si]);
    }
  }
  return a;
}

}  // namespace

PilotEstimates stacked_ls(const ReceivedGrid& y, const Subframe& subframe) {
  const auto& cfg = subframe.cfg;
  if (cfg.pilot_scheme != phy::PilotScheme::kNonOrthogonal) {
    throw std::invalid_argument("stacked_ls: requires non-orthogonal pilots");
  }
  const int nt = cfg.num_streams;
  if (static_cast<int>(cfg.pilot_symbols.size()) < nt) {
    throw std::invalid_argument("stacked_ls: need at least num_streams pilot symbols");
  }
  std::vector<std::vector<int>> all(nt);
  for (int s = 0; s < nt; ++s) all[s] = subframe.pilot_subcarriers(s);
  auto est = PilotEstimates::zeros(y.nr, nt, cfg.pilot_symbols, all);

  std::vector<int> streams(nt);
  for (int s = 0; s < nt; ++s) streams[s] = s;
  const int tp = est.num_pilot_symbols();

  for (int k = 0; k < cfg.num_subcarriers; ++k) {
    numerics::CMat a = pilot_matrix(subframe, k, streams);
    Eigen::ColPivHouseholderQR<numerics::CMat> qr(a);
    if (qr.rank() < a.cols()) {
      throw SingularMatrixError("stacked_ls: rank-deficient pilot matrix");
    }
    numerics::CVec b(tp);
    for (int r = 0; r < y.nr; ++r) {
      for (int ti = 0; ti < tp; ++ti) b(ti) = y.at(cfg.pilot_symbols[ti], k)[r];
      numerics::CVec h = qr.solve(b);
      for (int s = 0; s < nt; ++s) {
        for (int ti = 0; ti < tp; ++ti) est.at(r, s, ti, k) = h(s);
      }
    }
  }
  return est;
}

double estimate_noise_var(const ReceivedGrid& y, const Subframe& subframe) {
  const auto& cfg = subframe.cfg;
  const int tp = static_cast<int>(cfg.pilot_symbols.size());
  double residual = 0.0;
  long dof = 0;

  for (int k = 0; k < cfg.num_subcarriers; ++k) {
    std::vector<int> active;
    for (int s = 0; s < cfg.num_streams; ++s) {
      if (subframe.is_pilot(cfg.pilot_symbols[0], k, s)) active.push_back(s);
    }
    if (active.empty() || tp <= static_cast<int>(active.size())) continue;
    numerics::CMat a = pilot_matrix(subframe, k, active);
    Eigen::ColPivHouseholderQR<numerics::CMat> qr(a);
    if (qr.rank() < a.cols()) continue;
    numerics::CVec b(tp);
    for (int r = 0; r < y.nr; ++r) {
      for (int ti = 0; ti < tp; ++ti) b(ti) = y.at(cfg.pilot_symbols[ti], k)[r];
      numerics::CVec fit = a * qr.solve(b);
      residual += (b - fit).squaredNorm();
      dof += tp - static_cast<long>(active.size());
    }
  }
  if (dof == 0) {
    throw std::invalid_argument("estimate_noise_var: no residual degrees of freedom");
  }
  return residual / static_cast<double>(dof);
}

namespace {

// Linear interpolation of (pos, val) samples onto 0..n-1 with constant hold
// outside the sampled range. Positions are ascending.
void interp_line(const std::vector<int>& pos, const std::vector<cd>& val, int n,
                 std::vector<cd>& out) {
  out.resize(n);
  int seg = 0;
  for (int i = 0; i < n; ++i) {
    if (i <= pos.front()) {
      out[i] = val.front();
    } else if (i >= pos.back()) {
      out[i] = val.back();
    } else {
      while (pos[seg + 1] < i) ++seg;
      const double w =
          static_cast<double>(i - pos[seg]) / static_cast<double>(pos[seg + 1] - pos[seg]);
      out[i] = (1.0 - w) * val[seg] + w * val[seg + 1];
    }
  }
}

}  // namespace

ChannelGrid interpolate_grid(const PilotEstimates& pilots, int T, int K) {
  if (pilots.num_pilot_symbols() < 1 || pilots.num_pilot_subcarriers() < 1) {
    throw std::invalid_argument("interpolate_grid: empty pilot estimates");
  }
  ChannelGrid grid = ChannelGrid::zeros(T, K, pilots.nr, pilots.nt);
  const int tp = pilots.num_pilot_symbols();
  const int kp = pilots.num_pilot_subcarriers();

  std::vector<cd> freq_line;
  std::vector<cd> vals(kp);
  std::vector<cd> time_vals(tp);
  // Rows interpolated in frequency at each pilot symbol, per (r, s).
  std::vector<std::vector<cd>> rows(tp);

  for (int r = 0; r < pilots.nr; ++r) {
    for (int s = 0; s < pilots.nt; ++s) {
      for (int ti = 0; ti < tp; ++ti) {
        for (int ki = 0; ki < kp; ++ki) vals[ki] = pilots.at(r, s, ti, ki);
        interp_line(pilots.pilot_subcarriers[s], vals, K, freq_line);
        rows[ti] = freq_line;
      }
      std::vector<cd> column(T);
      for (int k = 0; k < K; ++k) {
        for (int ti = 0; ti < tp; ++ti) time_vals[ti] = rows[ti][k];
        interp_line(pilots.pilot_symbols, time_vals, T, column);
        for (int t = 0; t < T; ++t) grid.at(t, k, r, s) = column[t];
      }
    }
  }
  return grid;
}

CorrelationModel empirical_corr(std::span<const PilotEstimates> history, int window) {
  if (history.empty()) throw std::invalid_argument("empirical_corr: empty history");
  if (window < 1) throw std::invalid_argument("empirical_corr: window must be >= 1");

  const std::size_t take = std::min<std::size_t>(window, history.size());
  const auto& first = history[history.size() - take];
  const int kp = first.num_pilot_subcarriers();

  CMat r = CMat::Zero(kp, kp);
  numerics::CVec h(kp);
  long n = 0;
  for (std::size_t i = history.size() - take; i < history.size(); ++i) {
    const auto& est = history[i];
    if (est.num_pilot_subcarriers() != kp) {
      throw std::invalid_argument("empirical_corr: inconsistent pilot dimensions in history");
    }
    for (int rx = 0; rx < est.nr; ++rx) {
      for (int s = 0; s < est.nt; ++s) {
        for (int ti = 0; ti < est.num_pilot_symbols(); ++ti) {
          for (int ki = 0; ki < kp; ++ki) h(ki) = est.at(rx, s, ti, ki);
          r.noalias() += h * h.adjoint();
          ++n;
        }
      }
    }
  }
  r /= static_cast<double>(n);
  r = 0.5 * (r + r.adjoint()).eval();
  r.diagonal().array() += 1e-6;
  return {std::move(r), CorrelationModel::Provenance::kEmpirical};
}

CorrelationModel genie_corr(const TapProcess& taps, double subcarrier_spacing_hz,
                            const std::vector<int>& subcarriers) {
  const int kp = static_cast<int>(subcarriers.size());
  CMat r(kp, kp);
  for (int i = 0; i < kp; ++i) {
    for (int j = 0; j < kp; ++j) {
      r(i, j) = channel::frequency_correlation(taps, subcarrier_spacing_hz,
                                               subcarriers[i] - subcarriers[j]);
    }
  }
  return {std::move(r), CorrelationModel::Provenance::kGenie};
}

PilotEstimates lmmse_filter(const PilotEstimates& pilots, const CorrelationModel& corr,
                            double sigma2, double pilot_power) {
  const int kp = pilots.num_pilot_subcarriers();
  if (corr.r.rows() != kp || corr.r.cols() != kp) {
    throw std::invalid_argument("lmmse_filter: correlation dimension mismatch");
  }
  if (sigma2 < 0 || !(pilot_power > 0)) {
    throw std::invalid_argument("lmmse_filter: bad noise or pilot power");
  }
  if (sigma2 == 0.0) return pilots;  // R (R)^-1 = I

  CMat reg = corr.r;
  reg.diagonal().array() += sigma2 / pilot_power;
  Eigen::LLT<CMat> llt(reg);
  if (llt.info() != Eigen::Success) {
    throw SingularMatrixError("lmmse_filter: regularized correlation not positive definite");
  }

  PilotEstimates out = pilots;
  numerics::CVec h(kp);
  for (int r = 0; r < pilots.nr; ++r) {
    for (int s = 0; s < pilots.nt; ++s) {
      for (int ti = 0; ti < pilots.num_pilot_symbols(); ++ti) {
        for (int ki = 0; ki < kp; ++ki) h(ki) = pilots.at(r, s, ti, ki);
        numerics::CVec filtered = corr.r * llt.solve(h);
        for (int ki = 0; ki < kp; ++ki) out.at(r, s, ti, ki) = filtered(ki);
      }
    }
  }
  return out;
}

ChannelEstimate assemble_estimate(PilotEstimates pilots, std::string method, int T, int K,
                                  double sigma2_est) {
  ChannelEstimate est;
  est.grid = interpolate_grid(pilots, T, K);
  est.method = std::move(method);
  est.pilots = std::move(pilots);
  est.sigma2_est = sigma2_est;
  return est;
}

double nmse_pilot_db(const ChannelEstimate& est, const ChannelGrid& truth) {
  const auto& p = est.pilots;
  double num = 0.0, den = 0.0;
  for (int r = 0; r < p.nr; ++r) {
    for (int s = 0; s < p.nt; ++s) {
      for (int ti = 0; ti < p.num_pilot_symbols(); ++ti) {
        const int t = p.pilot_symbols[ti];
        for (int ki = 0; ki < p.num_pilot_subcarriers(); ++ki) {
          const int k = p.pilot_subcarriers[s][ki];
          const cd h = truth.at(t, k, r, s);
          num += std::norm(p.at(r, s, ti, ki) - h);
          den += std::norm(h);
        }
      }
    }
  }
  if (den == 0.0) throw std::invalid_argument("nmse_pilot_db: truth grid has zero norm");
  if (num == 0.0) return -300.0;
  return std::max(10.0 * std::log10(num / den), -300.0);
}

void EmLmmseHistory::push(PilotEstimates estimates) {
  buffer_.push_back(std::move(estimates));
  if (static_cast<int>(buffer_.size()) > window_) {
    buffer_.erase(buffer_.begin());
  }
}

}  // namespace structce::estimators
