#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "structce/channel.hpp"
#include "structce/config.hpp"
#include "structce/estimators.hpp"
#include "structce/phy.hpp"
#include "structce/structnet.hpp"

namespace structce::harness {

/// Known estimator tags: "ls", "em-lmmse", "genie-lmmse" run on the
/// orthogonal-pilot subframe, "stacked-ls" and "structnet-ce" on the
/// non-orthogonal one. Both subframes of a trial share the channel, data
/// payload and noise realization, so comparisons are paired.
extern const std::vector<std::string> kAllMethods;

struct ExperimentConfig {
  channel::ChannelConfig channel;
  std::vector<int> pilot_symbols = {2, 5, 8, 11};
  phy::ModulationScheme modulation = phy::ModulationScheme::qpsk();
  std::vector<double> snr_db = {0, 5, 10, 15, 20};
  int trials = 10;
  std::vector<std::string> methods = kAllMethods;
  net::TrainConfig train;
  int em_lmmse_window = 10;
  std::uint64_t seed = 1;
  std::string output = "results.csv";
  int threads = 0;  // 0 = hardware concurrency

  void validate() const;
  phy::SubframeConfig subframe_config(phy::PilotScheme scheme) const;

  /// Reads every known key from the config, applying defaults for the rest,
  /// and rejects unknown keys. See README for the schema.
  static ExperimentConfig from_kv(const config::KeyValueConfig& kv);
};

struct ResultRecord {
  std::uint64_t seed = 0;
  int trial = 0;
  double snr_db = 0.0;
  std::string method;
  double nmse_full_db = 0.0;
  double nmse_pilot_db = 0.0;
  double ber = 0.0;
  double train_ms = 0.0;  // measured wall time of train_subframe; 0 for classical methods
  bool fallback = false;
};

/// Fixed CSV schema: header line plus one row per (trial, SNR, method).
/// The CSV is a pure function of the config: the volatile train_ms wall time
/// is serialized floored to whole seconds (fine-grained timing lives in the
/// returned records and the printed summary).
extern const char* kCsvHeader;
std::string to_csv(const std::vector<ResultRecord>& records);

/// Runs every requested method on one seeded channel realization at every
/// SNR. Pure function of (cfg, trial_index).
std::vector<ResultRecord> run_trial(const ExperimentConfig& cfg, int trial_index);

/// Fans trials out over worker threads, writes the CSV to cfg.output
/// (prefixed by $STRUCTCE_OUTPUT_DIR for relative paths when set), prints a
/// per-(SNR, method) summary table to `log`, and returns the records sorted
/// by (trial, SNR, method order). Output is byte-identical for a given
/// config regardless of thread count.
std::vector<ResultRecord> run_sweep(const ExperimentConfig& cfg, std::ostream& log);

std::string resolve_output_path(const std::string& output);
void print_summary(const std::vector<ResultRecord>& records, std::ostream& log);

// ---- invariant suites (shared by selftest, gradcheck and acceptance) -----

struct SuiteResult {
  std::string name;
  bool pass = false;
  std::string detail;
  double seconds = 0.0;
};

/// Fold output must not depend on the interferer's constellation symbol when
/// the channel-layer column matches the true channel (QPSK and 16-QAM,
/// exhaustive enumeration per random channel).
SuiteResult check_fold_invariance(int num_channels, double tol, std::uint64_t seed);

/// Analytic loss gradients against central finite differences at random
/// off-boundary points; `fault` perturbs the analytic gradient (negative
/// control for the fault-injection hook).
SuiteResult check_gradients(int num_points, double tol, double fault, std::uint64_t seed);

/// Genie LMMSE filter output against a brute-force jointly Gaussian
/// conditional mean on a small toy instance (independent real-valued solver).
SuiteResult check_lmmse_oracle(double tol);

/// Empirical sum-of-sinusoids autocorrelation against J0(2 pi f_D tau).
SuiteResult check_jakes_autocorrelation(int num_realizations, double tol, std::uint64_t seed);

/// Empirical frequency correlation against the power-delay-profile closed form.
SuiteResult check_frequency_correlation(int num_realizations, double tol, std::uint64_t seed);

struct SelftestOptions {
  bool inject_gradient_fault = false;
  std::uint64_t seed = 7;
};

/// Runs all invariant suites at reduced scale, printing one status line per
/// suite. Returns 0 iff every suite passed.
int selftest(std::ostream& out, const SelftestOptions& opts);

}  // namespace structce::harness
