#include <chrono>
#include <cmath>
#include <limits>
#include <cstdio>
#include <ostream>

#include "structce/harness.hpp"

namespace structce::harness {

namespace {

using numerics::RngStream;

double now_seconds() {
  return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

char detail_buf[256];

// Single-RE fixture for fold tests: y = h_0 x_0 + h_1 x_1, channel-layer
// weights set to the true columns.
struct FoldFixture {
  phy::Subframe subframe;
  phy::ReceivedGrid y;
  net::StructNetParams params;

  FoldFixture(const phy::ModulationScheme& mod, RngStream& rng) {
    subframe.cfg.num_subcarriers = 1;
    subframe.cfg.symbols_per_subframe = 1;
    subframe.cfg.pilot_symbols = {0};
    subframe.cfg.pilot_scheme = phy::PilotScheme::kNonOrthogonal;
    subframe.cfg.modulation = mod;
    subframe.cfg.num_streams = 2;
    subframe.x.assign(2, cd{0.0, 0.0});
    subframe.pilot_mask.assign(2, 1);

    y.T = 1;
    y.K = 1;
    y.nr = 2;
    y.y.assign(2, cd{0.0, 0.0});

    params.nr = 2;
    params.nt = 2;
    params.modulation = mod;
    params.pilot_subcarriers = {0};
    params.w.resize(4);
    for (cd& v : params.w) v = rng.next_cgaussian(1.0);
    params.classifier.init(4, 4, 4, rng);
  }

  void set_symbols(cd x0, cd x1) {
    subframe.x[0] = x0;
    subframe.x[1] = x1;
    for (int r = 0; r < 2; ++r) {
      y.y[r] = params.col(0, 0)[r] * x0 + params.col(0, 1)[r] * x1;
    }
  }
};

}  // namespace

SuiteResult check_fold_invariance(int num_channels, double tol, std::uint64_t seed) {
  const double t0 = now_seconds();
  RngStream rng(seed, 0xF01D);
  double worst = 0.0;
  for (const auto& mod : {phy::ModulationScheme::qpsk(), phy::ModulationScheme::qam16()}) {
    const auto points = mod.constellation();
    for (int trial = 0; trial < num_channels; ++trial) {
      FoldFixture fx(mod, rng);
      const cd x0 = points[rng.next_below(points.size())];
      for (int dim = 0; dim < 2; ++dim) {
        const double v = dim == 0 ? x0.real() : x0.imag();
        net::TrainingSample sample{0, 0, 0, dim, 0, v >= 0 ? 1 : -1};
        bool first = true;
        numerics::CVec reference;
        for (const cd& x1 : points) {
          fx.set_symbols(x0, x1);
          auto r = net::channel_shift(fx.y, fx.subframe, sample, fx.params);
          auto z = net::interference_fold(r, fx.params, 0, 0);
          if (first) {
            reference = z;
            first = false;
          } else {
            worst = std::max(worst, (z - reference).cwiseAbs().maxCoeff());
          }
        }
      }
    }
  }
  std::snprintf(detail_buf, sizeof(detail_buf), "max deviation %.3e (tol %.1e)", worst, tol);
  return {"fold-invariance", worst <= tol, detail_buf, now_seconds() - t0};
}

namespace {

// Smallest |pre-activation| of the classifier over a batch; finite
// differences must not step across a rectifier kink.
double min_relu_margin(const phy::ReceivedGrid& y, const phy::Subframe& subframe,
                       const std::vector<net::TrainingSample>& batch,
                       const net::StructNetParams& params) {
  const auto& clf = params.classifier;
  double margin = std::numeric_limits<double>::infinity();
  std::vector<double> f(clf.input), a1(clf.h1);
  for (const auto& sample : batch) {
    auto r = net::channel_shift(y, subframe, sample, params);
    auto z = net::interference_fold(r, params, sample.k, sample.stream);
    for (int i = 0; i < params.nr; ++i) {
      f[2 * i] = z(i).real() / params.modulation.base_amp;
      f[2 * i + 1] = z(i).imag() / params.modulation.base_amp;
    }
    for (int i = 0; i < clf.h1; ++i) {
      double acc = clf.theta[clf.off_b1() + i];
      for (int j = 0; j < clf.input; ++j) acc += clf.theta[clf.off_w1() + i * clf.input + j] * f[j];
      margin = std::min(margin, std::abs(acc));
      a1[i] = acc > 0 ? acc : 0.0;
    }
    for (int i = 0; i < clf.h2; ++i) {
      double acc = clf.theta[clf.off_b2() + i];
      for (int j = 0; j < clf.h1; ++j) acc += clf.theta[clf.off_w2() + i * clf.h1 + j] * a1[j];
      margin = std::min(margin, std::abs(acc));
    }
  }
  return margin;
}

}  // namespace

SuiteResult check_gradients(int num_points, double tol, double fault, std::uint64_t seed) {
  const double t0 = now_seconds();
  RngStream rng(seed, 0x9CAD);
  double worst = 0.0;
  int accepted = 0;
  int attempts = 0;

  while (accepted < num_points && attempts < num_points * 50) {
    ++attempts;
    const bool wide = (accepted % 3) == 2;  // every third point on 16-QAM
    const double lambda = (accepted % 2) == 1 ? 0.05 : 0.0;

    phy::SubframeConfig sc;
    sc.num_subcarriers = 4;
    sc.symbols_per_subframe = 2;
    sc.pilot_symbols = {0, 1};
    sc.pilot_scheme = phy::PilotScheme::kNonOrthogonal;
    sc.modulation = wide ? phy::ModulationScheme::qam16() : phy::ModulationScheme::qpsk();
    sc.num_streams = 2;

    channel::ChannelConfig cc;
    cc.nt = 2;
    cc.nr = 2;
    cc.num_taps = 2;
    cc.num_subcarriers = sc.num_subcarriers;
    cc.symbols_per_subframe = sc.symbols_per_subframe;

    auto payload = rng.substream(attempts * 8 + 1);
    auto pilots = rng.substream(attempts * 8 + 2);
    auto chan = rng.substream(attempts * 8 + 3);
    auto noise = rng.substream(attempts * 8 + 4);
    auto wdraw = rng.substream(attempts * 8 + 5);

    auto subframe = phy::build_subframe(sc, payload, pilots);
    auto taps = channel::generate_taps(cc, chan);
    auto realization = channel::realize(taps, cc);
    auto y = phy::transmit(subframe, realization, 10.0, noise);

    net::StructNetParams params;
    params.nr = cc.nr;
    params.nt = cc.nt;
    params.modulation = sc.modulation;
    params.pilot_subcarriers = subframe.pilot_subcarriers(0);
    params.w.resize(static_cast<std::size_t>(sc.num_subcarriers) * cc.nt * cc.nr);
    for (cd& v : params.w) v = wdraw.next_cgaussian(1.0);
    params.classifier.init(2 * cc.nr, 8, 4, wdraw);

    auto all = net::build_training_set(subframe, y);
    std::vector<net::TrainingSample> batch;
    for (int i = 0; i < 8; ++i) batch.push_back(all[wdraw.next_below(all.size())]);

    const double margin_needed = 1e-3 * 2.0 * sc.modulation.base_amp;
    if (net::min_fold_boundary_margin(y, subframe, batch, params) < margin_needed) continue;
    if (min_relu_margin(y, subframe, batch, params) < 1e-4) continue;

    auto analytic = net::loss_and_gradients(y, subframe, batch, params, lambda);
    if (fault != 0.0) analytic.grad[0] += fault;

    auto theta = net::flatten_params(params);
    auto loss_at = [&](const std::vector<double>& th) {
      net::StructNetParams probe = params;
      net::unflatten_params(th, probe);
      return net::loss_and_gradients(y, subframe, batch, probe, lambda).loss;
    };
    auto fd = numerics::finite_diff_grad(loss_at, theta, 1e-7);

    double na = 0.0, nf = 0.0, nd = 0.0;
    for (std::size_t i = 0; i < fd.size(); ++i) {
      na += analytic.grad[i] * analytic.grad[i];
      nf += fd[i] * fd[i];
      nd += (analytic.grad[i] - fd[i]) * (analytic.grad[i] - fd[i]);
    }
    const double rel = std::sqrt(nd) / std::max({std::sqrt(na), std::sqrt(nf), 1e-12});
    worst = std::max(worst, rel);
    ++accepted;
  }

  const bool pass = accepted == num_points && worst <= tol;
  std::snprintf(detail_buf, sizeof(detail_buf), "%d points, worst relative error %.3e (tol %.1e)",
                accepted, worst, tol);
  return {"gradient-check", pass, detail_buf, now_seconds() - t0};
}

namespace {

// Gauss-Jordan with partial pivoting; deliberately independent of the
// library solve paths it cross-checks.
std::vector<double> dense_solve(std::vector<std::vector<double>> a, std::vector<double> b) {
  const int n = static_cast<int>(b.size());
  for (int col = 0; col < n; ++col) {
    int pivot = col;
    for (int r = col + 1; r < n; ++r) {
      if (std::abs(a[r][col]) > std::abs(a[pivot][col])) pivot = r;
    }
    std::swap(a[col], a[pivot]);
    std::swap(b[col], b[pivot]);
    const double d = a[col][col];
    for (int r = 0; r < n; ++r) {
      if (r == col) continue;
      const double f = a[r][col] / d;
      for (int c = col; c < n; ++c) a[r][c] -= f * a[col][c];
      b[r] -= f * b[col];
    }
  }
  std::vector<double> x(n);
  for (int i = 0; i < n; ++i) x[i] = b[i] / a[i][i];
  return x;
}

}  // namespace

SuiteResult check_lmmse_oracle(double tol) {
  const double t0 = now_seconds();
  const int kp = 4;
  const double sigma2 = 0.3;

  channel::TapProcess taps;
  taps.nr = 1;
  taps.nt = 1;
  taps.num_sinusoids = 1;
  taps.powers = {0.5, 0.3, 0.2};
  taps.delays = {0.0, 100e-9, 250e-9};
  auto corr = estimators::genie_corr(taps, 15e3 * 40, {0, 1, 2, 3});

  RngStream rng(11, 0x0B5E);
  auto pilots = estimators::PilotEstimates::zeros(1, 1, {0}, {{0, 1, 2, 3}});
  for (int k = 0; k < kp; ++k) pilots.at(0, 0, 0, k) = rng.next_cgaussian(1.0);

  auto filtered = estimators::lmmse_filter(pilots, corr, sigma2, 1.0);

  // Brute force: conditional mean of the jointly Gaussian (h, h_ls) pair on
  // the real-valued composite vector.
  const int n = 2 * kp;
  std::vector<std::vector<double>> s22(n, std::vector<double>(n, 0.0));
  std::vector<std::vector<double>> s12(n, std::vector<double>(n, 0.0));
  for (int i = 0; i < kp; ++i) {
    for (int j = 0; j < kp; ++j) {
      const cd rij = corr.r(i, j);
      const double extra = i == j ? sigma2 : 0.0;
      // cross-cov E[h h_ls^H] = R; observation cov = R + sigma2 I
      s12[i][j] = 0.5 * rij.real();
      s12[i][j + kp] = -0.5 * rij.imag();
      s12[i + kp][j] = 0.5 * rij.imag();
      s12[i + kp][j + kp] = 0.5 * rij.real();
      s22[i][j] = 0.5 * (rij.real() + extra);
      s22[i][j + kp] = -0.5 * rij.imag();
      s22[i + kp][j] = 0.5 * rij.imag();
      s22[i + kp][j + kp] = 0.5 * (rij.real() + extra);
    }
  }
  std::vector<double> obs(n);
  for (int k = 0; k < kp; ++k) {
    obs[k] = pilots.at(0, 0, 0, k).real();
    obs[k + kp] = pilots.at(0, 0, 0, k).imag();
  }
  auto w = dense_solve(s22, obs);  // Sigma22^-1 y
  double worst = 0.0;
  for (int i = 0; i < kp; ++i) {
    double re = 0.0, im = 0.0;
    for (int j = 0; j < n; ++j) {
      re += s12[i][j] * w[j];
      im += s12[i + kp][j] * w[j];
    }
    worst = std::max(worst, std::abs(cd(re, im) - filtered.at(0, 0, 0, i)));
  }

  std::snprintf(detail_buf, sizeof(detail_buf), "max |filter - conditional mean| %.3e (tol %.1e)",
                worst, tol);
  return {"lmmse-oracle", worst <= tol, detail_buf, now_seconds() - t0};
}

SuiteResult check_jakes_autocorrelation(int num_realizations, double tol, std::uint64_t seed) {
  const double t0 = now_seconds();
  channel::ChannelConfig cc;
  cc.nt = 1;
  cc.nr = 1;
  cc.num_taps = 1;
  cc.num_subcarriers = 1;
  const double fd = channel::doppler_hz(cc.speed_mps, cc.carrier_hz);

  const int lags = 21;
  std::vector<double> acc(lags, 0.0);
  RngStream rng(seed, 0x1A4E);
  for (int n = 0; n < num_realizations; ++n) {
    auto sub = rng.substream(n);
    auto taps = channel::generate_taps(cc, sub);
    const cd g0 = taps.gain(0, 0, 0, 0.0);
    for (int i = 0; i < lags; ++i) {
      const double tau = 2.0 * i / (lags - 1) / fd;  // tau * f_D in [0, 2]
      acc[i] += (taps.gain(0, 0, 0, tau) * std::conj(g0)).real();
    }
  }
  double worst = 0.0;
  for (int i = 0; i < lags; ++i) {
    const double tau_fd = 2.0 * i / (lags - 1);
    const double expected = std::cyl_bessel_j(0.0, 2.0 * M_PI * tau_fd);
    worst = std::max(worst, std::abs(acc[i] / acc[0] - expected));
  }
  std::snprintf(detail_buf, sizeof(detail_buf),
                "%d realizations, max |R(tau)/R(0) - J0| %.4f (tol %.2f)", num_realizations,
                worst, tol);
  return {"jakes-autocorrelation", worst <= tol, detail_buf, now_seconds() - t0};
}

SuiteResult check_frequency_correlation(int num_realizations, double tol, std::uint64_t seed) {
  const double t0 = now_seconds();
  channel::ChannelConfig cc;
  cc.nt = 1;
  cc.nr = 1;
  cc.num_subcarriers = 48;
  cc.symbols_per_subframe = 1;

  const int max_lag = 24;
  std::vector<cd> acc(max_lag + 1, cd{0.0, 0.0});
  std::vector<long> counts(max_lag + 1, 0);
  RngStream rng(seed, 0xFC02);
  channel::TapProcess taps;
  for (int n = 0; n < num_realizations; ++n) {
    auto sub = rng.substream(n);
    taps = channel::generate_taps(cc, sub);
    auto grid = channel::realize(taps, cc).grid;
    for (int d = 0; d <= max_lag; ++d) {
      for (int k = 0; k + d < cc.num_subcarriers; ++k) {
        acc[d] += grid.at(0, k + d, 0, 0) * std::conj(grid.at(0, k, 0, 0));
        counts[d] += 1;
      }
    }
  }
  double worst = 0.0;
  for (int d = 0; d <= max_lag; ++d) {
    const cd expected = channel::frequency_correlation(taps, cc.subcarrier_spacing_hz, d);
    worst = std::max(worst, std::abs(acc[d] / static_cast<double>(counts[d]) - expected));
  }
  std::snprintf(detail_buf, sizeof(detail_buf),
                "%d realizations, max |corr - closed form| %.4f (tol %.2f)", num_realizations,
                worst, tol);
  return {"frequency-correlation", worst <= tol, detail_buf, now_seconds() - t0};
}

int selftest(std::ostream& out, const SelftestOptions& opts) {
  std::vector<SuiteResult> results;
  results.push_back(check_fold_invariance(200, 1e-12, opts.seed));
  results.push_back(
      check_gradients(20, 1e-5, opts.inject_gradient_fault ? 0.1 : 0.0, opts.seed));
  results.push_back(check_lmmse_oracle(1e-10));
  results.push_back(check_jakes_autocorrelation(10000, 0.05, opts.seed));
  results.push_back(check_frequency_correlation(10000, 0.05, opts.seed));

  int failures = 0;
  char line[384];
  for (const auto& r : results) {
    std::snprintf(line, sizeof(line), "[%s] %-24s %s (%.1fs)\n", r.pass ? "PASS" : "FAIL",
                  r.name.c_str(), r.detail.c_str(), r.seconds);
    out << line;
    failures += r.pass ? 0 : 1;
  }
  return failures;
}

}  // namespace structce::harness
