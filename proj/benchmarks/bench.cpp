#include <benchmark/benchmark.h>

#include "structce/estimators.hpp"
#include "structce/phy.hpp"
#include "structce/structnet.hpp"

using namespace structce;
using numerics::RngStream;

namespace {

struct Fixture {
  channel::TapProcess taps;
  channel::ChannelRealization realization;
  phy::Subframe subframe;
  phy::ReceivedGrid y;
  channel::ChannelConfig cc;
  phy::SubframeConfig sc;
};

Fixture make_fixture(int K, phy::PilotScheme scheme, double snr_db) {
  Fixture fx;
  fx.cc.num_subcarriers = K;
  fx.sc.num_subcarriers = K;
  fx.sc.pilot_scheme = scheme;

  RngStream rng(1, 0);
  auto chan = rng.substream(1);
  fx.taps = channel::generate_taps(fx.cc, chan);
  fx.realization = channel::realize(fx.taps, fx.cc);
  auto payload = rng.substream(2);
  auto pilots = rng.substream(3);
  fx.subframe = phy::build_subframe(fx.sc, payload, pilots);
  auto noise = rng.substream(4);
  fx.y = phy::transmit(fx.subframe, fx.realization, snr_db, noise);
  return fx;
}

}  // namespace

static void BM_ChannelRealize(benchmark::State& state) {
  channel::ChannelConfig cc;
  cc.num_subcarriers = static_cast<int>(state.range(0));
  RngStream rng(2, 0);
  auto taps = channel::generate_taps(cc, rng);
  for (auto _ : state) {
    benchmark::DoNotOptimize(channel::realize(taps, cc));
  }
}
BENCHMARK(BM_ChannelRealize)->Arg(256)->Arg(1024);

static void BM_BuildSubframe(benchmark::State& state) {
  phy::SubframeConfig sc;
  sc.num_subcarriers = 1024;
  for (auto _ : state) {
    RngStream payload(3, 0), pilots(3, 1);
    benchmark::DoNotOptimize(phy::build_subframe(sc, payload, pilots));
  }
}
BENCHMARK(BM_BuildSubframe);

static void BM_Transmit(benchmark::State& state) {
  auto fx = make_fixture(1024, phy::PilotScheme::kNonOrthogonal, 10.0);
  for (auto _ : state) {
    RngStream noise(4, 0);
    benchmark::DoNotOptimize(phy::transmit(fx.subframe, fx.realization, 10.0, noise));
  }
}
BENCHMARK(BM_Transmit);

static void BM_StackedLs(benchmark::State& state) {
  auto fx = make_fixture(1024, phy::PilotScheme::kNonOrthogonal, 10.0);
  for (auto _ : state) {
    benchmark::DoNotOptimize(estimators::stacked_ls(fx.y, fx.subframe));
  }
}
BENCHMARK(BM_StackedLs);

static void BM_LmmseFilter(benchmark::State& state) {
  auto fx = make_fixture(1024, phy::PilotScheme::kOrthogonal, 10.0);
  auto pilots = estimators::ls_estimate(fx.y, fx.subframe);
  auto corr =
      estimators::genie_corr(fx.taps, fx.cc.subcarrier_spacing_hz, pilots.pilot_subcarriers[0]);
  const double sigma2 = phy::noise_var_from_snr(10.0, 2);
  for (auto _ : state) {
    benchmark::DoNotOptimize(estimators::lmmse_filter(pilots, corr, sigma2, 1.0));
  }
}
BENCHMARK(BM_LmmseFilter);

static void BM_MmseEqualize(benchmark::State& state) {
  auto fx = make_fixture(1024, phy::PilotScheme::kNonOrthogonal, 10.0);
  const double sigma2 = phy::noise_var_from_snr(10.0, 2);
  for (auto _ : state) {
    benchmark::DoNotOptimize(phy::mmse_equalize(fx.y, fx.realization.grid, sigma2));
  }
}
BENCHMARK(BM_MmseEqualize);

static void BM_LossAndGradients(benchmark::State& state) {
  auto fx = make_fixture(256, phy::PilotScheme::kNonOrthogonal, 10.0);
  auto samples = net::build_training_set(fx.subframe, fx.y);
  samples.resize(256);
  RngStream rng(5, 0);
  net::TrainConfig train;
  train.epochs = 0;
  auto init = net::train_subframe(fx.y, fx.subframe, train, rng);
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        net::loss_and_gradients(fx.y, fx.subframe, samples, init.params, 0.0));
  }
}
BENCHMARK(BM_LossAndGradients);

static void BM_TrainSubframe(benchmark::State& state) {
  auto fx = make_fixture(static_cast<int>(state.range(0)), phy::PilotScheme::kNonOrthogonal,
                         10.0);
  net::TrainConfig train;
  train.epochs = static_cast<int>(state.range(1));
  for (auto _ : state) {
    RngStream rng(6, 0);
    benchmark::DoNotOptimize(net::train_subframe(fx.y, fx.subframe, train, rng));
  }
}
BENCHMARK(BM_TrainSubframe)->Args({256, 10})->Args({1024, 50})->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
