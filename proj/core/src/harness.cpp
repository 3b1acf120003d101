#include "structce/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <ostream>
#include <stdexcept>
#include <thread>

namespace structce::harness {

const std::vector<std::string> kAllMethods = {"ls", "em-lmmse", "genie-lmmse", "stacked-ls",
                                              "structnet-ce"};

const char* kCsvHeader = "seed,trial,snr_db,method,nmse_full_db,nmse_pilot_db,ber,train_ms,fallback";

namespace {

// Substream salts: one deterministic stream per purpose and trial.
constexpr std::uint64_t kSaltChannel = 1;
constexpr std::uint64_t kSaltPilotOrth = 2;
constexpr std::uint64_t kSaltPilotNonOrth = 3;
constexpr std::uint64_t kSaltPayload = 4;
constexpr std::uint64_t kSaltNoiseBase = 0x100;
constexpr std::uint64_t kSaltTrainBase = 0x200;

bool needs_orthogonal(const std::vector<std::string>& methods) {
  for (const auto& m : methods) {
    if (m == "ls" || m == "em-lmmse" || m == "genie-lmmse") return true;
  }
  return false;
}

bool needs_non_orthogonal(const std::vector<std::string>& methods) {
  for (const auto& m : methods) {
    if (m == "stacked-ls" || m == "structnet-ce") return true;
  }
  return false;
}

}  // namespace

void ExperimentConfig::validate() const {
  channel.validate();
  subframe_config(phy::PilotScheme::kNonOrthogonal).validate();
  if (needs_orthogonal(methods)) subframe_config(phy::PilotScheme::kOrthogonal).validate();
  if (trials < 1) throw std::invalid_argument("ExperimentConfig: trials must be >= 1");
  if (snr_db.empty()) throw std::invalid_argument("ExperimentConfig: need at least one SNR");
  if (methods.empty()) throw std::invalid_argument("ExperimentConfig: need at least one method");
  for (const auto& m : methods) {
    if (std::find(kAllMethods.begin(), kAllMethods.end(), m) == kAllMethods.end()) {
      throw std::invalid_argument("ExperimentConfig: unknown method '" + m + "'");
    }
  }
  if (em_lmmse_window < 1) throw std::invalid_argument("ExperimentConfig: window must be >= 1");
  if (threads < 0) throw std::invalid_argument("ExperimentConfig: threads must be >= 0");
  if (train.epochs < 0 || train.batch_size < 1 || train.max_restarts < 0) {
    throw std::invalid_argument("ExperimentConfig: bad training schedule");
  }
  if (!(train.lr_classifier > 0) || !(train.lr_channel > 0) || train.smoothness_lambda < 0) {
    throw std::invalid_argument("ExperimentConfig: bad training step sizes");
  }
  if (train.hidden1 < 1 || train.hidden1 > 64 || train.hidden2 < 1 || train.hidden2 > 64) {
    throw std::invalid_argument("ExperimentConfig: classifier hidden sizes must be in 1..64");
  }
  if (!(train.adam_beta1 > 0) || train.adam_beta1 >= 1 || !(train.adam_beta2 > 0) ||
      train.adam_beta2 >= 1 || !(train.adam_eps > 0)) {
    throw std::invalid_argument("ExperimentConfig: bad optimizer constants");
  }
}

phy::SubframeConfig ExperimentConfig::subframe_config(phy::PilotScheme scheme) const {
  phy::SubframeConfig sc;
  sc.num_subcarriers = channel.num_subcarriers;
  sc.symbols_per_subframe = channel.symbols_per_subframe;
  sc.pilot_symbols = pilot_symbols;
  sc.pilot_scheme = scheme;
  sc.modulation = modulation;
  sc.num_streams = channel.nt;
  return sc;
}

ExperimentConfig ExperimentConfig::from_kv(const config::KeyValueConfig& kv) {
  ExperimentConfig cfg;
  cfg.channel.nt = static_cast<int>(kv.get_int("channel.nt", cfg.channel.nt));
  cfg.channel.nr = static_cast<int>(kv.get_int("channel.nr", cfg.channel.nr));
  cfg.channel.num_taps = static_cast<int>(kv.get_int("channel.taps", cfg.channel.num_taps));
  cfg.channel.delay_spread_s =
      kv.get_double("channel.delay_spread_ns", cfg.channel.delay_spread_s * 1e9) * 1e-9;
  cfg.channel.carrier_hz = kv.get_double("channel.carrier_hz", cfg.channel.carrier_hz);
  if (kv.has("channel.speed_mps") && kv.has("channel.speed_kmh")) {
    throw std::invalid_argument("config: give channel.speed_mps or channel.speed_kmh, not both");
  }
  if (kv.has("channel.speed_mps")) {
    cfg.channel.speed_mps = kv.get_double("channel.speed_mps", cfg.channel.speed_mps);
  } else {
    cfg.channel.speed_mps =
        channel::kmh_to_mps(kv.get_double("channel.speed_kmh", cfg.channel.speed_mps * 3.6));
  }
  cfg.channel.subcarrier_spacing_hz =
      kv.get_double("channel.subcarrier_spacing_hz", cfg.channel.subcarrier_spacing_hz);
  cfg.channel.symbol_duration_s = 1.0 / cfg.channel.subcarrier_spacing_hz;
  cfg.channel.num_subcarriers =
      static_cast<int>(kv.get_int("grid.subcarriers", cfg.channel.num_subcarriers));
  cfg.channel.symbols_per_subframe =
      static_cast<int>(kv.get_int("grid.symbols", cfg.channel.symbols_per_subframe));
  cfg.channel.num_sinusoids =
      static_cast<int>(kv.get_int("channel.sinusoids", cfg.channel.num_sinusoids));

  std::vector<double> pilots_default(cfg.pilot_symbols.begin(), cfg.pilot_symbols.end());
  cfg.pilot_symbols.clear();
  for (double p : kv.get_double_list("grid.pilot_symbols", pilots_default)) {
    cfg.pilot_symbols.push_back(static_cast<int>(p));
  }
  cfg.modulation = phy::ModulationScheme::from_order(
      static_cast<int>(kv.get_int("modulation", cfg.modulation.order)));

  cfg.snr_db = kv.get_double_list("snr_db", cfg.snr_db);
  cfg.trials = static_cast<int>(kv.get_int("trials", cfg.trials));
  cfg.methods = kv.get_string_list("methods", cfg.methods);
  cfg.em_lmmse_window = static_cast<int>(kv.get_int("em_lmmse.window", cfg.em_lmmse_window));
  cfg.seed = static_cast<std::uint64_t>(kv.get_int("seed", static_cast<long long>(cfg.seed)));
  cfg.output = kv.get_string("output", cfg.output);
  cfg.threads = static_cast<int>(kv.get_int("threads", cfg.threads));

  cfg.train.epochs = static_cast<int>(kv.get_int("train.epochs", cfg.train.epochs));
  cfg.train.batch_size = static_cast<int>(kv.get_int("train.batch", cfg.train.batch_size));
  cfg.train.lr_classifier = kv.get_double("train.lr_classifier", cfg.train.lr_classifier);
  cfg.train.lr_channel = kv.get_double("train.lr_channel", cfg.train.lr_channel);
  const std::string init = kv.get_string("train.init", "stacked_ls");
  if (init == "stacked_ls") {
    cfg.train.init = net::TrainConfig::Init::kStackedLs;
  } else if (init == "small_random") {
    cfg.train.init = net::TrainConfig::Init::kSmallRandom;
  } else {
    throw std::invalid_argument("config: train.init must be stacked_ls or small_random");
  }
  const std::string copt = kv.get_string("train.channel_opt", "momentum_sgd");
  if (copt == "momentum_sgd") {
    cfg.train.channel_opt = net::TrainConfig::ChannelOpt::kMomentumSgd;
  } else if (copt == "adam") {
    cfg.train.channel_opt = net::TrainConfig::ChannelOpt::kAdam;
  } else {
    throw std::invalid_argument("config: train.channel_opt must be momentum_sgd or adam");
  }
  cfg.train.smoothness_lambda = kv.get_double("train.lambda", cfg.train.smoothness_lambda);
  cfg.train.max_restarts = static_cast<int>(kv.get_int("train.restarts", cfg.train.max_restarts));
  cfg.train.hidden1 = static_cast<int>(kv.get_int("train.hidden1", cfg.train.hidden1));
  cfg.train.hidden2 = static_cast<int>(kv.get_int("train.hidden2", cfg.train.hidden2));
  cfg.train.adam_beta1 = kv.get_double("train.beta1", cfg.train.adam_beta1);
  cfg.train.adam_beta2 = kv.get_double("train.beta2", cfg.train.adam_beta2);
  cfg.train.adam_eps = kv.get_double("train.eps", cfg.train.adam_eps);

  auto unknown = kv.untouched_keys();
  if (!unknown.empty()) {
    std::string msg = "config: unknown key(s):";
    for (const auto& k : unknown) msg += " " + k;
    throw std::invalid_argument(msg);
  }
  cfg.validate();
  return cfg;
}

namespace {

struct MethodOutput {
  estimators::ChannelEstimate estimate;
  double train_ms = 0.0;
  bool fallback = false;
};

MethodOutput run_method(const std::string& method, const ExperimentConfig& cfg,
                        const channel::TapProcess& taps, const phy::Subframe& sub_orth,
                        const phy::Subframe& sub_non,
                        const phy::ReceivedGrid& y_orth, const phy::ReceivedGrid& y_non,
                        double sigma2, numerics::RngStream train_rng) {
  const int T = cfg.channel.symbols_per_subframe;
  const int K = cfg.channel.num_subcarriers;
  MethodOutput out;
  if (method == "ls") {
    out.estimate =
        estimators::assemble_estimate(estimators::ls_estimate(y_orth, sub_orth), "ls", T, K, 0.0);
  } else if (method == "genie-lmmse") {
    auto pilots = estimators::ls_estimate(y_orth, sub_orth);
    auto corr = estimators::genie_corr(taps, cfg.channel.subcarrier_spacing_hz,
                                       pilots.pilot_subcarriers[0]);
    out.estimate = estimators::assemble_estimate(
        estimators::lmmse_filter(pilots, corr, sigma2, 1.0), "genie-lmmse", T, K, sigma2);
  } else if (method == "em-lmmse") {
    auto pilots = estimators::ls_estimate(y_orth, sub_orth);
    const double sigma2_est = estimators::estimate_noise_var(y_orth, sub_orth);
    estimators::EmLmmseHistory history(cfg.em_lmmse_window);
    history.push(pilots);
    auto corr = estimators::empirical_corr(history.view(), cfg.em_lmmse_window);
    out.estimate = estimators::assemble_estimate(
        estimators::lmmse_filter(pilots, corr, sigma2_est, 1.0), "em-lmmse", T, K, sigma2_est);
  } else if (method == "stacked-ls") {
    out.estimate = estimators::assemble_estimate(estimators::stacked_ls(y_non, sub_non),
                                                 "stacked-ls", T, K, 0.0);
  } else if (method == "structnet-ce") {
    auto result = net::train_subframe(y_non, sub_non, cfg.train, train_rng);
    out.estimate = net::extract_channel(result.params, sub_non.cfg);
    out.train_ms = result.stats.wall_ms;
    out.fallback = result.stats.fell_back;
  } else {
    throw std::invalid_argument("run_method: unknown method '" + method + "'");
  }
  return out;
}

}  // namespace

std::vector<ResultRecord> run_trial(const ExperimentConfig& cfg, int trial_index) {
  cfg.validate();
  numerics::RngStream trial_rng(cfg.seed, static_cast<std::uint64_t>(trial_index));

  auto channel_rng = trial_rng.substream(kSaltChannel);
  const auto taps = channel::generate_taps(cfg.channel, channel_rng);
  const auto realization = channel::realize(taps, cfg.channel);

  const bool want_orth = needs_orthogonal(cfg.methods);
  const bool want_non = needs_non_orthogonal(cfg.methods);

  phy::Subframe sub_orth, sub_non;
  if (want_orth) {
    auto payload = trial_rng.substream(kSaltPayload);
    auto pilots = trial_rng.substream(kSaltPilotOrth);
    sub_orth = phy::build_subframe(cfg.subframe_config(phy::PilotScheme::kOrthogonal), payload,
                                   pilots);
  }
  if (want_non) {
    auto payload = trial_rng.substream(kSaltPayload);  // same payload bits as sub_orth
    auto pilots = trial_rng.substream(kSaltPilotNonOrth);
    sub_non = phy::build_subframe(cfg.subframe_config(phy::PilotScheme::kNonOrthogonal), payload,
                                  pilots);
  }

  std::vector<ResultRecord> records;
  records.reserve(cfg.snr_db.size() * cfg.methods.size());

  for (std::size_t si = 0; si < cfg.snr_db.size(); ++si) {
    const double snr = cfg.snr_db[si];
    const double sigma2 = phy::noise_var_from_snr(snr, cfg.channel.nt);
    phy::ReceivedGrid y_orth, y_non;
    if (want_orth) {
      auto noise = trial_rng.substream(kSaltNoiseBase + si);
      y_orth = phy::transmit(sub_orth, realization, snr, noise);
    }
    if (want_non) {
      auto noise = trial_rng.substream(kSaltNoiseBase + si);  // paired noise draw
      y_non = phy::transmit(sub_non, realization, snr, noise);
    }

    for (const auto& method : cfg.methods) {
      ResultRecord rec;
      rec.seed = cfg.seed;
      rec.trial = trial_index;
      rec.snr_db = snr;
      rec.method = method;

      try {
        auto out = run_method(method, cfg, taps, sub_orth, sub_non, y_orth, y_non, sigma2,
                              trial_rng.substream(kSaltTrainBase + si));
        rec.train_ms = out.train_ms;
        rec.fallback = out.fallback;
        rec.nmse_full_db = phy::nmse_db(out.estimate.grid, realization.grid);
        rec.nmse_pilot_db = estimators::nmse_pilot_db(out.estimate, realization.grid);

        const bool orth_method =
            method == "ls" || method == "em-lmmse" || method == "genie-lmmse";
        const auto& sub = orth_method ? sub_orth : sub_non;
        const auto& y = orth_method ? y_orth : y_non;
        auto xhat = phy::mmse_equalize(y, out.estimate.grid, sigma2);
        auto bits = phy::demap_data_bits(xhat, sub.cfg);
        double errs = 0.0;
        for (int s = 0; s < cfg.channel.nt; ++s) errs += phy::ber(sub.data_bits[s], bits[s]);
        rec.ber = errs / cfg.channel.nt;
      } catch (const std::exception&) {
        // estimator failures land in the record, they never abort the trial
        const double nan = std::numeric_limits<double>::quiet_NaN();
        rec.nmse_full_db = nan;
        rec.nmse_pilot_db = nan;
        rec.ber = nan;
        rec.train_ms = 0.0;
        rec.fallback = false;
      }

      records.push_back(std::move(rec));
    }
  }
  return records;
}

std::string to_csv(const std::vector<ResultRecord>& records) {
  std::string out = kCsvHeader;
  out += '\n';
  char buf[256];
  for (const auto& r : records) {
    // train_ms is floored to whole seconds here so the CSV stays a pure
    // function of the config; per-millisecond timings are in the in-memory
    // records and the summary table.
    std::snprintf(buf, sizeof(buf), "%llu,%d,%.6g,%s,%.6f,%.6f,%.8f,%.3f,%d\n",
                  static_cast<unsigned long long>(r.seed), r.trial, r.snr_db, r.method.c_str(),
                  r.nmse_full_db, r.nmse_pilot_db, r.ber,
                  std::floor(r.train_ms / 1000.0) * 1000.0, r.fallback ? 1 : 0);
    out += buf;
  }
  return out;
}

std::string resolve_output_path(const std::string& output) {
  if (output.empty() || output.front() == '/') return output;
  const char* dir = std::getenv("STRUCTCE_OUTPUT_DIR");
  if (dir == nullptr || dir[0] == '\0') return output;
  std::string joined = dir;
  if (joined.back() != '/') joined += '/';
  return joined + output;
}

void print_summary(const std::vector<ResultRecord>& records, std::ostream& log) {
  struct Acc {
    double nmse_full = 0, nmse_pilot = 0, ber = 0, train_ms = 0;
    int n = 0;
  };
  std::map<std::pair<double, std::string>, Acc> acc;
  for (const auto& r : records) {
    if (std::isnan(r.nmse_full_db)) continue;  // failed estimator records
    auto& a = acc[{r.snr_db, r.method}];
    a.nmse_full += r.nmse_full_db;
    a.nmse_pilot += r.nmse_pilot_db;
    a.ber += r.ber;
    a.train_ms += r.train_ms;
    a.n += 1;
  }
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%8s  %-14s %6s %14s %15s %12s %10s\n", "snr_db", "method",
                "n", "nmse_full_db", "nmse_pilot_db", "ber", "train_ms");
  log << buf;
  for (const auto& [key, a] : acc) {
    std::snprintf(buf, sizeof(buf), "%8.2f  %-14s %6d %14.3f %15.3f %12.3e %10.2f\n", key.first,
                  key.second.c_str(), a.n, a.nmse_full / a.n, a.nmse_pilot / a.n, a.ber / a.n,
                  a.train_ms / a.n);
    log << buf;
  }
}

std::vector<ResultRecord> run_sweep(const ExperimentConfig& cfg, std::ostream& log) {
  cfg.validate();
  const int workers = std::max(
      1, std::min(cfg.trials, cfg.threads > 0
                                  ? cfg.threads
                                  : static_cast<int>(std::thread::hardware_concurrency())));

  std::vector<std::vector<ResultRecord>> slots(cfg.trials);
  std::atomic<int> next{0};
  std::vector<std::string> errors(cfg.trials);

  auto worker = [&]() {
    while (true) {
      const int trial = next.fetch_add(1);
      if (trial >= cfg.trials) return;
      try {
        slots[trial] = run_trial(cfg, trial);
      } catch (const std::exception& e) {
        errors[trial] = e.what();
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (int i = 0; i < workers; ++i) pool.emplace_back(worker);
  for (auto& t : pool) t.join();

  for (int i = 0; i < cfg.trials; ++i) {
    if (!errors[i].empty()) {
      throw std::runtime_error("run_sweep: trial " + std::to_string(i) + " failed: " + errors[i]);
    }
  }

  // Trial-major order keeps the CSV independent of scheduling.
  std::vector<ResultRecord> records;
  records.reserve(static_cast<std::size_t>(cfg.trials) * cfg.snr_db.size() * cfg.methods.size());
  for (auto& slot : slots) {
    for (auto& r : slot) records.push_back(std::move(r));
  }

  const std::string path = resolve_output_path(cfg.output);
  if (!path.empty()) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("run_sweep: cannot open output file " + path);
    out << to_csv(records);
    if (!out) throw std::runtime_error("run_sweep: write failed for " + path);
  }
  print_summary(records, log);
  return records;
}

}  // namespace structce::harness
