#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "structce/estimators.hpp"
#include "structce/harness.hpp"

using namespace structce;
using namespace structce::estimators;
using numerics::RngStream;
using phy::PilotScheme;

namespace {

struct Link {
  channel::TapProcess taps;
  channel::ChannelRealization realization;
  phy::Subframe subframe;
  phy::ReceivedGrid y;
};

Link make_link(PilotScheme scheme, int K, double snr_db, std::uint64_t seed,
               double speed_kmh = 5.0, int taps = 8) {
  channel::ChannelConfig cc;
  cc.num_subcarriers = K;
  cc.symbols_per_subframe = 14;
  cc.speed_mps = channel::kmh_to_mps(speed_kmh);
  cc.num_taps = taps;

  phy::SubframeConfig sc;
  sc.num_subcarriers = K;
  sc.symbols_per_subframe = 14;
  sc.pilot_scheme = scheme;
  sc.num_streams = 2;

  RngStream rng(seed, 0);
  Link link;
  auto chan = rng.substream(1);
  link.taps = channel::generate_taps(cc, chan);
  link.realization = channel::realize(link.taps, cc);
  auto payload = rng.substream(2);
  auto pilots = rng.substream(3);
  link.subframe = phy::build_subframe(sc, payload, pilots);
  auto noise = rng.substream(4);
  link.y = phy::transmit(link.subframe, link.realization, snr_db, noise);
  return link;
}

}  // namespace

TEST_CASE("ls estimate divides out the pilot") {
  phy::SubframeConfig sc;
  sc.num_subcarriers = 2;
  sc.symbols_per_subframe = 1;
  sc.pilot_symbols = {0};
  sc.pilot_scheme = PilotScheme::kOrthogonal;
  sc.num_streams = 2;
  phy::Subframe sf;
  sf.cfg = sc;
  sf.x = {cd{1, 0}, cd{0, 0}, cd{0, 0}, cd{1, 0}};
  sf.pilot_mask = {1, 0, 0, 1};
  phy::ReceivedGrid y;
  y.T = 1;
  y.K = 2;
  y.nr = 1;
  y.y = {cd{0.3, -0.4}, cd{0.7, 0.1}};
  auto est = ls_estimate(y, sf);
  CHECK(est.at(0, 0, 0, 0) == cd{0.3, -0.4});
  CHECK(est.at(0, 1, 0, 0) == cd{0.7, 0.1});

  sf.x[0] = cd{0, 0};
  CHECK_THROWS_AS(ls_estimate(y, sf), std::invalid_argument);
}

TEST_CASE("noiseless ls hits the sentinel floor at pilot REs") {
  auto link = make_link(PilotScheme::kOrthogonal, 16, 300.0, 21, 0.0, 1);
  auto est = assemble_estimate(ls_estimate(link.y, link.subframe), "ls", 14, 16, 0.0);
  CHECK(nmse_pilot_db(est, link.realization.grid) <= -200.0);
}

TEST_CASE("ls error variance tracks the noise level") {
  const double snr = 10.0;
  const double sigma2 = phy::noise_var_from_snr(snr, 2);
  double err = 0;
  long n = 0;
  for (int trial = 0; trial < 8; ++trial) {
    auto link = make_link(PilotScheme::kOrthogonal, 128, snr, 300 + trial, 0.0);
    auto est = ls_estimate(link.y, link.subframe);
    for (int r = 0; r < 2; ++r) {
      for (int s = 0; s < 2; ++s) {
        for (int ti = 0; ti < est.num_pilot_symbols(); ++ti) {
          const int t = est.pilot_symbols[ti];
          for (int ki = 0; ki < est.num_pilot_subcarriers(); ++ki) {
            const int k = est.pilot_subcarriers[s][ki];
            err += std::norm(est.at(r, s, ti, ki) - link.realization.grid.at(t, k, r, s));
            ++n;
          }
        }
      }
    }
  }
  CHECK(err / n == doctest::Approx(sigma2).epsilon(0.10));
}

TEST_CASE("stacked ls recovers a static channel exactly") {
  auto link = make_link(PilotScheme::kNonOrthogonal, 32, 300.0, 5, 0.0);
  auto est = stacked_ls(link.y, link.subframe);
  double worst = 0;
  for (int r = 0; r < 2; ++r) {
    for (int s = 0; s < 2; ++s) {
      for (int k = 0; k < 32; ++k) {
        worst = std::max(worst,
                         std::abs(est.at(r, s, 0, k) - link.realization.grid.at(2, k, r, s)));
      }
    }
  }
  CHECK(worst <= 1e-10);
}

TEST_CASE("stacked ls rejects rank-deficient pilots") {
  auto link = make_link(PilotScheme::kNonOrthogonal, 4, 300.0, 6, 0.0);
  // overwrite pilots so every symbol repeats the same vector
  auto& sf = link.subframe;
  for (int t : sf.cfg.pilot_symbols) {
    for (int k = 0; k < sf.cfg.num_subcarriers; ++k) {
      for (int s = 0; s < 2; ++s) {
        sf.x[(static_cast<std::size_t>(t) * sf.cfg.num_subcarriers + k) * 2 + s] =
            sf.x[(static_cast<std::size_t>(sf.cfg.pilot_symbols[0]) * sf.cfg.num_subcarriers +
                  k) *
                     2 +
                 s];
      }
    }
  }
  CHECK_THROWS_AS(stacked_ls(link.y, sf), SingularMatrixError);
  CHECK_THROWS_AS(stacked_ls(link.y, make_link(PilotScheme::kOrthogonal, 4, 300.0, 6).subframe),
                  std::invalid_argument);
}

TEST_CASE("stacked ls floor under mobility is finite and logged") {
  auto link = make_link(PilotScheme::kNonOrthogonal, 32, 300.0, 7, 50.0);
  auto est = assemble_estimate(stacked_ls(link.y, link.subframe), "stacked-ls", 14, 32, 0.0);
  const double floor_db = phy::nmse_db(est.grid, link.realization.grid);
  MESSAGE("stacked-ls regression floor at 50 km/h: ", floor_db, " dB");
  CHECK(floor_db < -10.0);
  CHECK(floor_db > -60.0);
}

TEST_CASE("interpolation is exact for constant and affine channels") {
  auto pilots = PilotEstimates::zeros(1, 1, {2, 5}, {{1, 5}});
  SUBCASE("constant") {
    for (int ti = 0; ti < 2; ++ti) {
      for (int ki = 0; ki < 2; ++ki) pilots.at(0, 0, ti, ki) = cd{0.7, -0.2};
    }
    auto grid = interpolate_grid(pilots, 8, 8);
    for (int t = 0; t < 8; ++t) {
      for (int k = 0; k < 8; ++k) CHECK(std::abs(grid.at(t, k, 0, 0) - cd{0.7, -0.2}) <= 1e-14);
    }
  }
  SUBCASE("affine in k and t") {
    auto affine = [](int t, int k) { return cd(0.1 * k - 0.05 * t, 0.02 * k + 0.3 * t); };
    for (int ti = 0; ti < 2; ++ti) {
      const int t = pilots.pilot_symbols[ti];
      for (int ki = 0; ki < 2; ++ki) pilots.at(0, 0, ti, ki) = affine(t, 1 + 4 * ki);
    }
    auto grid = interpolate_grid(pilots, 8, 8);
    // interior points reproduce the affine field, edges hold the boundary
    for (int t = 2; t <= 5; ++t) {
      for (int k = 1; k <= 5; ++k) CHECK(std::abs(grid.at(t, k, 0, 0) - affine(t, k)) <= 1e-12);
    }
    CHECK(grid.at(0, 1, 0, 0) == grid.at(2, 1, 0, 0));
    CHECK(grid.at(7, 5, 0, 0) == grid.at(5, 5, 0, 0));
    CHECK(grid.at(3, 0, 0, 0) == grid.at(3, 1, 0, 0));
  }
}

TEST_CASE("denser pilots shrink interpolation error") {
  channel::ChannelConfig cc;
  cc.nt = 1;
  cc.nr = 1;
  cc.num_subcarriers = 64;
  cc.symbols_per_subframe = 4;
  cc.num_taps = 2;
  cc.delay_spread_s = 2e-6;  // strong frequency selectivity
  cc.speed_mps = 0.0;
  RngStream rng(31, 0);
  auto grid = channel::realize(channel::generate_taps(cc, rng), cc).grid;

  auto error_for_spacing = [&](int spacing) {
    std::vector<int> comb;
    for (int k = 0; k < 64; k += spacing) comb.push_back(k);
    auto pilots = PilotEstimates::zeros(1, 1, {0, 3}, {comb});
    for (int ti = 0; ti < 2; ++ti) {
      for (std::size_t ki = 0; ki < comb.size(); ++ki) {
        pilots.at(0, 0, ti, ki) = grid.at(pilots.pilot_symbols[ti], comb[ki], 0, 0);
      }
    }
    return phy::nmse_db(interpolate_grid(pilots, 4, 64), grid);
  };
  const double coarse = error_for_spacing(8);
  const double fine = error_for_spacing(4);
  const double finest = error_for_spacing(2);
  CHECK(fine < coarse);
  CHECK(finest < fine);
}

TEST_CASE("empirical correlation basics") {
  auto single = PilotEstimates::zeros(1, 1, {0}, {{0, 1}});
  single.at(0, 0, 0, 0) = cd{1.0, 0.0};
  single.at(0, 0, 0, 1) = cd{0.0, 2.0};
  std::vector<PilotEstimates> history = {single};
  auto corr = empirical_corr(history, 5);
  CHECK(corr.r(0, 0).real() == doctest::Approx(1.0 + 1e-6));
  CHECK(corr.r(1, 1).real() == doctest::Approx(4.0 + 1e-6));
  CHECK(corr.r(0, 1) == std::conj(corr.r(1, 0)));
  CHECK(corr.r(0, 1).imag() == doctest::Approx(-2.0));

  // window 1 keeps only the most recent subframe
  auto other = single;
  other.at(0, 0, 0, 0) = cd{3.0, 0.0};
  other.at(0, 0, 0, 1) = cd{0.0, 0.0};
  history.push_back(other);
  auto w1 = empirical_corr(history, 1);
  CHECK(w1.r(0, 0).real() == doctest::Approx(9.0 + 1e-6));

  CHECK_THROWS_AS(empirical_corr(std::span<const PilotEstimates>{}, 3), std::invalid_argument);
}

TEST_CASE("empirical correlation converges to the genie statistics") {
  channel::ChannelConfig cc;
  cc.num_subcarriers = 32;
  cc.symbols_per_subframe = 14;
  phy::SubframeConfig sc;
  sc.num_subcarriers = 32;
  sc.symbols_per_subframe = 14;
  sc.pilot_scheme = PilotScheme::kOrthogonal;
  sc.num_streams = 2;

  RngStream rng(77, 0);
  EmLmmseHistory history(1 << 20);  // effectively infinite window
  channel::TapProcess taps;
  for (int n = 0; n < 1000; ++n) {
    auto chan = rng.substream(4 * n);
    taps = channel::generate_taps(cc, chan);
    auto realization = channel::realize(taps, cc);
    auto payload = rng.substream(4 * n + 1);
    auto pilots = rng.substream(4 * n + 2);
    auto sf = phy::build_subframe(sc, payload, pilots);
    auto noise = rng.substream(4 * n + 3);
    auto y = phy::transmit(sf, realization, 40.0, noise);
    history.push(ls_estimate(y, sf));
  }
  auto emp = empirical_corr(history.view(), 1 << 20);
  auto genie = genie_corr(taps, cc.subcarrier_spacing_hz,
                          history.view().back().pilot_subcarriers[0]);
  double worst = 0;
  for (int i = 0; i < emp.r.rows(); ++i) {
    for (int j = 0; j < emp.r.cols(); ++j) {
      worst = std::max(worst, std::abs(emp.r(i, j) - genie.r(i, j)));
    }
  }
  CHECK(worst <= 0.05);
}

TEST_CASE("genie correlation closed form") {
  channel::TapProcess taps;
  taps.powers = {1.0};
  taps.delays = {0.0};
  auto corr = genie_corr(taps, 15e3, {0, 2, 4});
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) CHECK(std::abs(corr.r(i, j) - cd{1.0, 0.0}) <= 1e-15);
  }
  taps.powers = {0.5, 0.5};
  taps.delays = {0.0, 300e-9};
  auto corr2 = genie_corr(taps, 15e3, {0, 1, 2, 3});
  for (int i = 0; i < 4; ++i) CHECK(corr2.r(i, i).real() == doctest::Approx(1.0));
  CHECK(numerics::is_hermitian(corr2.r, 1e-12));
}

TEST_CASE("lmmse filter identities") {
  auto pilots = PilotEstimates::zeros(1, 1, {0}, {{0, 1, 2}});
  RngStream rng(13, 0);
  for (int k = 0; k < 3; ++k) pilots.at(0, 0, 0, k) = rng.next_cgaussian(1.0);

  CorrelationModel eye{numerics::CMat::Identity(3, 3), CorrelationModel::Provenance::kGenie};
  auto same = lmmse_filter(pilots, eye, 0.0, 1.0);
  for (int k = 0; k < 3; ++k) CHECK(same.at(0, 0, 0, k) == pilots.at(0, 0, 0, k));

  const double sigma2 = 0.4;
  auto shrunk = lmmse_filter(pilots, eye, sigma2, 1.0);
  for (int k = 0; k < 3; ++k) {
    CHECK(std::abs(shrunk.at(0, 0, 0, k) - pilots.at(0, 0, 0, k) / (1.0 + sigma2)) <= 1e-12);
  }

  CorrelationModel wrong{numerics::CMat::Identity(2, 2), CorrelationModel::Provenance::kGenie};
  CHECK_THROWS_AS(lmmse_filter(pilots, wrong, 0.1, 1.0), std::invalid_argument);
}

TEST_CASE("lmmse filter equals the jointly gaussian conditional mean") {
  auto res = harness::check_lmmse_oracle(1e-10);
  CHECK(res.pass);
}

TEST_CASE("noise variance estimate tracks truth on both pilot schemes") {
  for (auto scheme : {PilotScheme::kOrthogonal, PilotScheme::kNonOrthogonal}) {
    const double sigma2 = phy::noise_var_from_snr(10.0, 2);
    double est = 0;
    for (int trial = 0; trial < 6; ++trial) {
      auto link = make_link(scheme, 128, 10.0, 900 + trial, 0.0);
      est += estimate_noise_var(link.y, link.subframe);
    }
    CHECK(est / 6 == doctest::Approx(sigma2).epsilon(0.10));
  }
}

TEST_CASE("estimator ordering on a small paired batch") {
  double ls_acc = 0, em_acc = 0, genie_acc = 0;
  const int trials = 30;
  for (int trial = 0; trial < trials; ++trial) {
    auto link = make_link(PilotScheme::kOrthogonal, 64, 10.0, 1234 + trial);
    auto pilots = ls_estimate(link.y, link.subframe);
    const double sigma2 = phy::noise_var_from_snr(10.0, 2);

    ls_acc += phy::nmse_db(assemble_estimate(pilots, "ls", 14, 64, 0.0).grid,
                           link.realization.grid);
    auto genie = genie_corr(link.taps, 15e3, pilots.pilot_subcarriers[0]);
    genie_acc += phy::nmse_db(
        assemble_estimate(lmmse_filter(pilots, genie, sigma2, 1.0), "g", 14, 64, sigma2).grid,
        link.realization.grid);
    std::vector<PilotEstimates> hist = {pilots};
    auto emp = empirical_corr(hist, 10);
    const double s2est = estimate_noise_var(link.y, link.subframe);
    em_acc += phy::nmse_db(
        assemble_estimate(lmmse_filter(pilots, emp, s2est, 1.0), "e", 14, 64, s2est).grid,
        link.realization.grid);
  }
  CHECK(genie_acc / trials <= em_acc / trials + 0.2);
  CHECK(em_acc / trials <= ls_acc / trials + 0.2);
}
