#pragma once

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "ravl/evaluation.hpp"
#include "ravl/scenarios.hpp"
#include "ravl/simulation.hpp"

namespace ravl {

// Invalid configuration. Carries every violation found, not just the first.
struct ConfigError : std::runtime_error {
  explicit ConfigError(std::vector<std::string> all_violations);
  std::vector<std::string> violations;
};

// One variant entry as configured: explicit (eta, delta) or horizon-schedule
// derivation; absent values fall back to the built-in per-kind defaults.
struct VariantSpec {
  Variant variant;
  std::optional<double> eta;
  std::optional<double> delta;
  std::optional<double> horizon_l0_scale;
};

struct QuadraticParams {
  int num_agents = 1;
  int dim = 2;
  double coupling = 0.1;
  double lo = 0.0;
  double hi = 1.0;
  std::vector<std::vector<double>> centers;  // empty: default pattern
};

struct ExperimentConfig {
  std::string scenario = "cournot";
  long horizon = 2000;
  int trials = 20;
  std::uint64_t seed = 20260810;
  long bins = 200;
  std::optional<std::pair<double, double>> support;
  std::vector<double> alphas = {0.9};  // broadcast across agents when a single value
  double schedule_a = 0.6;
  double schedule_b = 0.05;
  std::optional<std::vector<long>> n_override;  // explicit n_t replacing the (a, b) schedule
  double gamma = 0.05;
  std::vector<VariantSpec> variants;  // empty: the four canonical variants
  std::vector<double> beta_sweep = {0.1, 0.5, 0.9};
  QuadraticParams quadratic;
  std::optional<std::vector<std::vector<double>>> x0;
  std::string out_dir = "out";
};

// Built-in per-variant (eta, delta) defaults, tuned for the Cournot scenario.
AgentParams<double> default_variant_params(VariantKind kind);
inline constexpr double kDefaultMomentumBeta = 0.5;

// Strict parse: unknown keys, type errors and range errors are all reported.
std::vector<std::string> validate_config_json(const nlohmann::json& doc,
                                              ExperimentConfig* out = nullptr);
ExperimentConfig parse_config(const nlohmann::json& doc);  // throws ConfigError
ExperimentConfig load_config_file(const std::filesystem::path& path);

// Canonical echo of the fully-resolved config (defaults expanded).
nlohmann::json resolved_config_json(const ExperimentConfig& config);

// Lowercase hex FNV-1a 64-bit hash over the compact, key-sorted JSON byte
// stream of the resolved config.
std::string config_hash(const ExperimentConfig& config);

// Config resolved against the scenario: game instance, per-agent parameters,
// per-episode schedules, one simulation spec per variant.
struct ResolvedExperiment {
  std::shared_ptr<GameOracle<double>> game;
  std::vector<RiskLevel<double>> alphas;
  std::vector<SimulationSpec<double>> specs;
  std::vector<long> samples_per_episode;
  VectorX<double> dkw;
  std::vector<std::string> notes;
};

ResolvedExperiment resolve(const ExperimentConfig& config);  // throws ConfigError

struct RunOptions {
  int jobs = 0;  // <= 0: one worker per hardware thread
  bool quiet = false;
};

// Simulates the variant x trial grid; result[v][k] is variant v, trial k.
// Trials run concurrently; traces land in deterministic slots.
std::vector<std::vector<TrialTrace<double>>> simulate_grid(const ResolvedExperiment& resolved,
                                                           const ExperimentConfig& config,
                                                           const RunOptions& options = {});

struct RunManifest {
  std::string command;
  std::string hash;
  std::uint64_t master_seed = 0;
  std::vector<std::uint64_t> trial_seeds;
  std::vector<std::string> files;
  std::vector<std::string> notes;
  long samples_per_trial = 0;  // sum of n_t over the horizon, per agent
  double wall_clock_seconds = 0.0;
  int jobs = 1;
  nlohmann::json resolved_config;
};

// Full grid run: trace.csv, aggregate.csv, manifest.json (manifest last and
// atomically, so an aborted run leaves no manifest).
RunManifest run(const ExperimentConfig& config, const std::filesystem::path& out_dir,
                const RunOptions& options = {});

// Aggregate series for >= 2 variants, aligned by episode: comparison.csv.
RunManifest compare(const ExperimentConfig& config, const std::filesystem::path& out_dir,
                    const RunOptions& options = {});

// One momentum series per beta under identical per-trial seeds: sweep.csv.
RunManifest sweep_beta(const ExperimentConfig& config, std::span<const double> betas,
                       const std::filesystem::path& out_dir, const RunOptions& options = {});

// Columns (t, n_t, r_t) for t = 1..T: schedule.csv.
RunManifest emit_schedule(const ExperimentConfig& config, const std::filesystem::path& out_dir);

// Shortest round-trip decimal formatting used for every CSV number.
std::string format_number(double v);

void write_trace_csv(std::ostream& os,
                     std::span<const std::vector<TrialTrace<double>>> per_variant);

// The per-variant aggregate metrics emitted to aggregate/comparison/sweep CSV.
std::vector<AggregateSeries<double>> standard_aggregates(const ResolvedExperiment& resolved,
                                                         std::span<const TrialTrace<double>> traces);

void write_aggregate_csv(
    std::ostream& os,
    std::span<const std::pair<std::string, std::vector<AggregateSeries<double>>>> per_variant);

}  // namespace ravl
