#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <sstream>

#include "structce/channel.hpp"

using namespace structce;
using namespace structce::channel;
using numerics::RngStream;

namespace {

ChannelConfig small_config() {
  ChannelConfig cfg;
  cfg.nt = 2;
  cfg.nr = 2;
  cfg.num_subcarriers = 16;
  cfg.symbols_per_subframe = 4;
  return cfg;
}

}  // namespace

TEST_CASE("doppler shift") {
  CHECK(doppler_hz(0.0, 3.5e9) == 0.0);
  CHECK(doppler_hz(kmh_to_mps(5.0), 3.5e9) == doctest::Approx(16.21).epsilon(1e-3));
  CHECK(doppler_hz(kmh_to_mps(50.0), 3.5e9) == doctest::Approx(162.1).epsilon(1e-3));
}

TEST_CASE("config validation") {
  ChannelConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.nt = 9;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = ChannelConfig{};
  cfg.num_taps = 0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = ChannelConfig{};
  cfg.delay_spread_s = 0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("power-delay profile is normalized") {
  for (int taps : {1, 3, 8}) {
    ChannelConfig cfg = small_config();
    cfg.num_taps = taps;
    RngStream rng(1, 0);
    auto tp = generate_taps(cfg, rng);
    double total = 0;
    for (double p : tp.powers) total += p;
    CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(tp.delays[0] == 0.0);
  }
}

TEST_CASE("single tap gives flat fading") {
  ChannelConfig cfg = small_config();
  cfg.num_taps = 1;
  RngStream rng(3, 0);
  auto tp = generate_taps(cfg, rng);
  auto grid = realize(tp, cfg).grid;
  for (int t = 0; t < cfg.symbols_per_subframe; ++t) {
    for (int k = 1; k < cfg.num_subcarriers; ++k) {
      for (int r = 0; r < 2; ++r) {
        for (int c = 0; c < 2; ++c) {
          CHECK(std::abs(grid.at(t, k, r, c) - grid.at(t, 0, r, c)) <= 1e-12);
        }
      }
    }
  }
}

TEST_CASE("fixed unit tap reproduces an all-ones grid") {
  ChannelConfig cfg = small_config();
  cfg.nt = 1;
  cfg.nr = 1;
  cfg.num_taps = 1;
  TapProcess tp;
  tp.nr = 1;
  tp.nt = 1;
  tp.num_sinusoids = 1;
  tp.doppler = 0.0;
  tp.powers = {1.0};
  tp.delays = {0.0};
  tp.cos_aoa = {1.0};
  tp.phases = {0.0};  // g(t) = 1
  auto grid = realize(tp, cfg).grid;
  for (int t = 0; t < cfg.symbols_per_subframe; ++t) {
    for (int k = 0; k < cfg.num_subcarriers; ++k) {
      CHECK(std::abs(grid.at(t, k, 0, 0) - cd{1.0, 0.0}) <= 1e-12);
    }
  }
}

TEST_CASE("two equal taps one grid period apart match the closed form") {
  ChannelConfig cfg = small_config();
  cfg.nt = 1;
  cfg.nr = 1;
  cfg.speed_mps = 0.0;
  const double df = cfg.subcarrier_spacing_hz;
  const int K = cfg.num_subcarriers;
  TapProcess tp;
  tp.nr = 1;
  tp.nt = 1;
  tp.num_sinusoids = 1;
  tp.doppler = 0.0;
  tp.powers = {0.5, 0.5};
  tp.delays = {0.0, 1.0 / (K * df)};
  tp.cos_aoa = {1.0, 1.0};
  tp.phases = {0.3, 1.1};
  auto grid = realize(tp, cfg).grid;
  const cd g1 = tp.gain(0, 0, 0, 0.0);
  const cd g2 = tp.gain(0, 0, 1, 0.0);
  for (int k = 0; k < K; ++k) {
    const double arg = -2.0 * M_PI * k / K;
    const cd expected = g1 + g2 * cd(std::cos(arg), std::sin(arg));
    CHECK(std::abs(grid.at(0, k, 0, 0) - expected) <= 1e-12);
  }
  // |H| is periodic in k with period K by construction of the two delays
  CHECK(std::abs(std::abs(grid.at(0, 0, 0, 0)) -
                 std::abs(g1 + g2 * cd(std::cos(-2.0 * M_PI), std::sin(-2.0 * M_PI)))) <= 1e-12);
}

TEST_CASE("zero speed freezes the channel in time") {
  ChannelConfig cfg = small_config();
  cfg.speed_mps = 0.0;
  RngStream rng(5, 0);
  auto tp = generate_taps(cfg, rng);
  auto grid = realize(tp, cfg).grid;
  for (int t = 1; t < cfg.symbols_per_subframe; ++t) {
    for (int k = 0; k < cfg.num_subcarriers; ++k) {
      CHECK(std::abs(grid.at(t, k, 0, 1) - grid.at(0, k, 0, 1)) <= 1e-12);
    }
  }
}

TEST_CASE("generation is deterministic in (config, seed)") {
  ChannelConfig cfg = small_config();
  RngStream rng1(77, 3), rng2(77, 3);
  auto g1 = realize(generate_taps(cfg, rng1), cfg).grid;
  auto g2 = realize(generate_taps(cfg, rng2), cfg).grid;
  REQUIRE(g1.h.size() == g2.h.size());
  for (std::size_t i = 0; i < g1.h.size(); ++i) CHECK(g1.h[i] == g2.h[i]);
}

TEST_CASE("unit average gain over a realization batch") {
  ChannelConfig cfg;
  cfg.nt = 1;
  cfg.nr = 1;
  cfg.num_subcarriers = 8;
  cfg.symbols_per_subframe = 2;
  RngStream rng(123, 9);
  double acc = 0;
  long n = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    auto sub = rng.substream(trial);
    auto grid = realize(generate_taps(cfg, sub), cfg).grid;
    for (const cd& v : grid.h) {
      acc += std::norm(v);
      ++n;
    }
  }
  CHECK(acc / n == doctest::Approx(1.0).epsilon(0.03));
}

TEST_CASE("csv export format") {
  ChannelConfig cfg = small_config();
  cfg.num_subcarriers = 2;
  cfg.symbols_per_subframe = 1;
  RngStream rng(4, 0);
  auto grid = realize(generate_taps(cfg, rng), cfg).grid;
  std::ostringstream out;
  export_grid_csv(grid, out);
  std::istringstream in(out.str());
  std::string header;
  std::getline(in, header);
  CHECK(header == "t,k,rx,tx,re,im");
  int rows = 0;
  std::string line;
  while (std::getline(in, line)) ++rows;
  CHECK(rows == 1 * 2 * 2 * 2);
  int t, k, r, c;
  double re, im;
  CHECK(std::sscanf(out.str().c_str() + header.size() + 1, "%d,%d,%d,%d,%lf,%lf", &t, &k, &r, &c,
                    &re, &im) == 6);
  CHECK(cd(re, im) == grid.at(0, 0, 0, 0));
}

TEST_CASE("closed-form frequency correlation") {
  TapProcess tp;
  tp.powers = {1.0};
  tp.delays = {0.0};
  for (int lag : {0, 1, 5}) {
    CHECK(std::abs(frequency_correlation(tp, 15e3, lag) - cd{1.0, 0.0}) <= 1e-15);
  }
  tp.powers = {0.6, 0.4};
  tp.delays = {0.0, 200e-9};
  CHECK(frequency_correlation(tp, 15e3, 0).real() == doctest::Approx(1.0));
  const cd r1 = frequency_correlation(tp, 15e3, 3);
  const double arg = -2.0 * M_PI * 3 * 15e3 * 200e-9;
  CHECK(r1.real() == doctest::Approx(0.6 + 0.4 * std::cos(arg)).epsilon(1e-12));
  CHECK(r1.imag() == doctest::Approx(0.4 * std::sin(arg)).epsilon(1e-12));
}
