#include <CLI11.hpp>

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "ravl/experiment.hpp"
#include "ravl/version.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitError = 1;
constexpr int kExitConfig = 2;
constexpr int kExitContract = 3;

struct CommonOptions {
  std::string config_path;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
  std::optional<int> trials;
  int jobs = 0;
  bool quiet = false;
};

void add_common(CLI::App* cmd, CommonOptions& opts) {
  cmd->add_option("--config", opts.config_path, "experiment config (JSON)")->required();
  cmd->add_option("--out", opts.out_dir, "output directory (overrides config out_dir)");
  cmd->add_option("--seed", opts.seed, "master seed (overrides config)");
  cmd->add_option("--trials", opts.trials, "trial count (overrides config)");
  cmd->add_option("--jobs", opts.jobs, "max concurrent trials (0 = hardware threads)");
  cmd->add_flag("--quiet", opts.quiet, "suppress progress output");
}

ravl::ExperimentConfig load(const CommonOptions& opts) {
  ravl::ExperimentConfig config = ravl::load_config_file(opts.config_path);
  if (opts.seed) config.seed = *opts.seed;
  if (opts.trials) config.trials = *opts.trials;
  if (!opts.out_dir.empty()) config.out_dir = opts.out_dir;
  return config;
}

void report(const ravl::RunManifest& manifest, bool quiet) {
  if (quiet) return;
  std::cout << manifest.command << " finished in " << manifest.wall_clock_seconds
            << " s; config hash " << manifest.hash << "\n";
  for (const std::string& file : manifest.files) std::cout << "  wrote " << file << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ravl: risk-averse no-regret learning in repeated games"};
  app.set_version_flag("--version", std::string(ravl::kLibraryVersion));
  app.require_subcommand(1);

  CommonOptions run_opts;
  CLI::App* cmd_run = app.add_subcommand("run", "simulate the variant x trial grid");
  add_common(cmd_run, run_opts);

  CommonOptions compare_opts;
  CLI::App* cmd_compare = app.add_subcommand("compare", "aggregate >= 2 variants side by side");
  add_common(cmd_compare, compare_opts);

  CommonOptions sweep_opts;
  std::vector<double> betas;
  CLI::App* cmd_sweep = app.add_subcommand("sweep-beta", "momentum sweep over beta values");
  add_common(cmd_sweep, sweep_opts);
  cmd_sweep->add_option("--betas", betas, "beta values (overrides config beta_sweep)")
      ->delimiter(',');

  CommonOptions sched_opts;
  CLI::App* cmd_sched = app.add_subcommand("emit-schedule", "emit (t, n_t, r_t) rows");
  add_common(cmd_sched, sched_opts);

  CommonOptions validate_opts;
  CLI::App* cmd_validate = app.add_subcommand("validate", "validate a config and report problems");
  add_common(cmd_validate, validate_opts);

  CLI11_PARSE(app, argc, argv);

  try {
    if (cmd_run->parsed()) {
      const ravl::ExperimentConfig config = load(run_opts);
      const auto manifest =
          ravl::run(config, config.out_dir, {run_opts.jobs, run_opts.quiet});
      report(manifest, run_opts.quiet);
    } else if (cmd_compare->parsed()) {
      const ravl::ExperimentConfig config = load(compare_opts);
      const auto manifest =
          ravl::compare(config, config.out_dir, {compare_opts.jobs, compare_opts.quiet});
      report(manifest, compare_opts.quiet);
    } else if (cmd_sweep->parsed()) {
      const ravl::ExperimentConfig config = load(sweep_opts);
      const std::vector<double>& sweep = betas.empty() ? config.beta_sweep : betas;
      const auto manifest =
          ravl::sweep_beta(config, sweep, config.out_dir, {sweep_opts.jobs, sweep_opts.quiet});
      report(manifest, sweep_opts.quiet);
    } else if (cmd_sched->parsed()) {
      const ravl::ExperimentConfig config = load(sched_opts);
      const auto manifest = ravl::emit_schedule(config, config.out_dir);
      report(manifest, sched_opts.quiet);
    } else if (cmd_validate->parsed()) {
      const ravl::ExperimentConfig config = load(validate_opts);
      ravl::resolve(config);
      if (!validate_opts.quiet)
        std::cout << "configuration OK; hash " << ravl::config_hash(config) << "\n";
    }
  } catch (const ravl::ConfigError& err) {
    std::cerr << err.what() << "\n";
    return kExitConfig;
  } catch (const ravl::ContractViolation& err) {
    std::cerr << "contract violation: " << err.what() << "\n";
    return kExitContract;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return kExitError;
  }
  return kExitOk;
}
