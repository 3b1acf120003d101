// structce: MIMO-OFDM channel-estimation benchmark CLI.
//
// Subcommands:
//   run            one trial, records to stdout
//   sweep          full trials x SNRs x methods experiment, CSV output
//   gradcheck      analytic-vs-finite-difference gradient verification
//   selftest       reduced invariant suites for all components
//   export-channel dump one channel realization as CSV

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "structce/harness.hpp"

namespace {

using structce::config::KeyValueConfig;
using structce::harness::ExperimentConfig;

struct CommonArgs {
  std::string config_path;
  std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("-c,--config", args.config_path, "key=value config file (see README)");
  cmd->add_option("--set", args.overrides, "override a config key, e.g. --set trials=50")
      ->expected(-1);
}

ExperimentConfig load_config(const CommonArgs& args) {
  KeyValueConfig kv = args.config_path.empty() ? KeyValueConfig{}
                                               : KeyValueConfig::from_file(args.config_path);
  for (const auto& kvpair : args.overrides) {
    const auto eq = kvpair.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("--set expects key=value, got '" + kvpair + "'");
    }
    kv.set(kvpair.substr(0, eq), kvpair.substr(eq + 1));
  }
  return ExperimentConfig::from_kv(kv);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"MIMO-OFDM link simulator and online channel-estimation benchmark"};
  app.require_subcommand(1);

  CommonArgs run_args, sweep_args, export_args;
  int run_trial_index = 0;
  auto* run_cmd = app.add_subcommand("run", "run a single trial and print its records");
  add_common(run_cmd, run_args);
  run_cmd->add_option("-t,--trial", run_trial_index, "trial index (default 0)");

  auto* sweep_cmd = app.add_subcommand("sweep", "run the full experiment and write a CSV");
  add_common(sweep_cmd, sweep_args);

  int grad_points = 100;
  bool grad_fault = false;
  std::uint64_t grad_seed = 7;
  auto* grad_cmd = app.add_subcommand("gradcheck", "verify analytic gradients");
  grad_cmd->add_option("-n,--points", grad_points, "number of random parameter points");
  grad_cmd->add_option("--seed", grad_seed, "rng seed");
  grad_cmd->add_flag("--inject-fault", grad_fault,
                     "perturb the analytic gradient (the check must then fail)");

  bool self_fault = false;
  std::uint64_t self_seed = 7;
  auto* self_cmd = app.add_subcommand("selftest", "run the invariant suites of all components");
  self_cmd->add_option("--seed", self_seed, "rng seed");
  self_cmd->add_flag("--inject-gradient-fault", self_fault,
                     "negative control: gradcheck suite must fail");

  std::string export_path = "channel.csv";
  std::uint64_t export_trial = 0;
  auto* export_cmd = app.add_subcommand("export-channel", "export one channel realization");
  add_common(export_cmd, export_args);
  export_cmd->add_option("-o,--output", export_path, "output CSV path");
  export_cmd->add_option("-t,--trial", export_trial, "trial index to realize");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run_cmd->parsed()) {
      auto cfg = load_config(run_args);
      auto records = structce::harness::run_trial(cfg, run_trial_index);
      std::cout << structce::harness::to_csv(records);
      return 0;
    }
    if (sweep_cmd->parsed()) {
      auto cfg = load_config(sweep_args);
      structce::harness::run_sweep(cfg, std::cout);
      std::cout << "wrote " << structce::harness::resolve_output_path(cfg.output) << "\n";
      return 0;
    }
    if (grad_cmd->parsed()) {
      auto res = structce::harness::check_gradients(grad_points, 1e-5,
                                                    grad_fault ? 0.1 : 0.0, grad_seed);
      std::printf("[%s] %s %s (%.1fs)\n", res.pass ? "PASS" : "FAIL", res.name.c_str(),
                  res.detail.c_str(), res.seconds);
      return res.pass ? 0 : 1;
    }
    if (self_cmd->parsed()) {
      structce::harness::SelftestOptions opts;
      opts.inject_gradient_fault = self_fault;
      opts.seed = self_seed;
      return structce::harness::selftest(std::cout, opts) == 0 ? 0 : 1;
    }
    if (export_cmd->parsed()) {
      auto cfg = load_config(export_args);
      structce::numerics::RngStream trial_rng(cfg.seed, export_trial);
      auto chan_rng = trial_rng.substream(1);
      auto taps = structce::channel::generate_taps(cfg.channel, chan_rng);
      auto realization = structce::channel::realize(taps, cfg.channel);
      const std::string path = structce::harness::resolve_output_path(export_path);
      std::ofstream out(path, std::ios::binary);
      if (!out) throw std::runtime_error("cannot open " + path);
      structce::channel::export_grid_csv(realization.grid, out);
      std::cout << "wrote " << path << "\n";
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
