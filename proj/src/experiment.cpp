#include "ravl/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <exception>
#include <fstream>
#include <iostream>
#include <mutex>
#include <sstream>
#include <string_view>
#include <thread>

#include "ravl/version.hpp"

namespace ravl {
namespace {

using nlohmann::json;
namespace fs = std::filesystem;

std::string join_lines(const std::vector<std::string>& lines) {
  std::string out = "invalid configuration:";
  for (const std::string& line : lines) {
    out += "\n  - ";
    out += line;
  }
  return out;
}

void check_keys(const json& obj, const std::string& path,
                std::initializer_list<std::string_view> allowed, std::vector<std::string>& out) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    const bool known =
        std::any_of(allowed.begin(), allowed.end(), [&](std::string_view k) { return k == it.key(); });
    if (!known) out.push_back("unknown key '" + it.key() + "' at " + path);
  }
}

bool read_positive_integer(const json& j, const std::string& path, long min_value, long& out,
                           std::vector<std::string>& violations) {
  if (!j.is_number_integer() && !j.is_number_unsigned()) {
    violations.push_back(path + " must be an integer");
    return false;
  }
  const long value = j.get<long>();
  if (value < min_value) {
    violations.push_back(path + " must be >= " + std::to_string(min_value));
    return false;
  }
  out = value;
  return true;
}

bool read_real(const json& j, const std::string& path, double& out,
               std::vector<std::string>& violations) {
  if (!j.is_number()) {
    violations.push_back(path + " must be a number");
    return false;
  }
  out = j.get<double>();
  return true;
}

VariantKind parse_kind(const std::string& kind, bool& ok) {
  ok = true;
  if (kind == "one_point") return VariantKind::kOnePoint;
  if (kind == "sample_reuse") return VariantKind::kSampleReuse;
  if (kind == "residual_feedback") return VariantKind::kResidualFeedback;
  if (kind == "momentum") return VariantKind::kMomentum;
  ok = false;
  return VariantKind::kMomentum;
}

void parse_variant(const json& entry, const std::string& path, std::vector<std::string>& violations,
                   std::vector<VariantSpec>& out) {
  if (!entry.is_object()) {
    violations.push_back(path + " must be an object");
    return;
  }
  check_keys(entry, path, {"kind", "beta", "eta", "delta", "horizon_schedule"}, violations);
  if (!entry.contains("kind") || !entry["kind"].is_string()) {
    violations.push_back(path + ".kind must name a variant");
    return;
  }
  bool kind_ok = false;
  const VariantKind kind = parse_kind(entry["kind"].get<std::string>(), kind_ok);
  if (!kind_ok) {
    violations.push_back(path + ".kind must be one of one_point, sample_reuse, " +
                         "residual_feedback, momentum");
    return;
  }

  VariantSpec spec;
  bool has_beta = false;
  double beta = kDefaultMomentumBeta;
  if (entry.contains("beta")) {
    if (kind != VariantKind::kMomentum) {
      violations.push_back(path + ".beta is only valid for the momentum variant");
    } else if (read_real(entry["beta"], path + ".beta", beta, violations)) {
      if (!(beta >= 0.0) || !(beta < 1.0)) {
        violations.push_back(path + ".beta must lie in [0, 1)");
        beta = kDefaultMomentumBeta;
      } else {
        has_beta = true;
      }
    }
  }
  if (entry.contains("eta")) {
    double eta = 0;
    if (read_real(entry["eta"], path + ".eta", eta, violations)) {
      if (!(eta > 0.0))
        violations.push_back(path + ".eta must be positive");
      else
        spec.eta = eta;
    }
  }
  if (entry.contains("delta")) {
    double delta = 0;
    if (read_real(entry["delta"], path + ".delta", delta, violations)) {
      if (!(delta > 0.0))
        violations.push_back(path + ".delta must be positive");
      else
        spec.delta = delta;
    }
  }
  if (entry.contains("horizon_schedule")) {
    const json& th = entry["horizon_schedule"];
    if (!th.is_object()) {
      violations.push_back(path + ".horizon_schedule must be an object");
    } else {
      check_keys(th, path + ".horizon_schedule", {"l0_scale"}, violations);
      double scale = 1.0;
      if (th.contains("l0_scale")) {
        if (read_real(th["l0_scale"], path + ".horizon_schedule.l0_scale", scale, violations) &&
            !(scale > 0.0)) {
          violations.push_back(path + ".horizon_schedule.l0_scale must be positive");
          scale = 1.0;
        }
      }
      spec.horizon_l0_scale = scale;
      if (spec.eta || spec.delta)
        violations.push_back(path + ": horizon_schedule conflicts with explicit eta/delta");
      if (has_beta) violations.push_back(path + ": horizon_schedule derives beta; drop the beta key");
    }
  }

  switch (kind) {
    case VariantKind::kOnePoint: spec.variant = Variant::one_point(); break;
    case VariantKind::kSampleReuse: spec.variant = Variant::sample_reuse(); break;
    case VariantKind::kResidualFeedback: spec.variant = Variant::residual_feedback(); break;
    case VariantKind::kMomentum:
      spec.variant = Variant::momentum((has_beta || !spec.horizon_l0_scale) ? beta : 0.0);
      break;
  }
  out.push_back(std::move(spec));
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t hash = 1469598103934665603ULL;
  for (const char c : bytes) {
    hash ^= static_cast<unsigned char>(c);
    hash *= 1099511628211ULL;
  }
  return hash;
}

std::string to_hex(std::uint64_t value) {
  static constexpr char digits[] = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = digits[value & 0xF];
    value >>= 4;
  }
  return out;
}

void write_file_atomic(const fs::path& path, const std::string& content) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    os << content;
    if (!os) throw std::runtime_error("failed to write " + tmp.string());
  }
  fs::rename(tmp, path);
}

std::string cell(const Eigen::Ref<const Eigen::RowVectorXd>& row) {
  std::string out;
  for (Eigen::Index k = 0; k < row.size(); ++k) {
    if (k > 0) out += ';';
    out += format_number(row[k]);
  }
  return out;
}

json resolved_json(const ExperimentConfig& config, const ResolvedExperiment& resolved) {
  json j;
  j["scenario"] = config.scenario;
  j["T"] = config.horizon;
  j["trials"] = config.trials;
  j["seed"] = config.seed;
  j["bins"] = config.bins;
  const CostSupport<double>& support = resolved.specs.front().support;
  j["support"] = {{"lo", support.lo}, {"hi", support.hi}};
  json alphas = json::array();
  for (const RiskLevel<double>& a : resolved.alphas) alphas.push_back(a.alpha);
  j["alpha"] = alphas;
  if (config.n_override) {
    j["schedule"] = {{"n", *config.n_override}};
  } else {
    j["schedule"] = {{"a", config.schedule_a}, {"b", config.schedule_b}};
  }
  j["gamma"] = config.gamma;
  json variants = json::array();
  for (const SimulationSpec<double>& spec : resolved.specs) {
    json v;
    switch (spec.variant.kind) {
      case VariantKind::kOnePoint: v["kind"] = "one_point"; break;
      case VariantKind::kSampleReuse: v["kind"] = "sample_reuse"; break;
      case VariantKind::kResidualFeedback: v["kind"] = "residual_feedback"; break;
      case VariantKind::kMomentum:
        v["kind"] = "momentum";
        v["beta"] = spec.variant.beta;
        break;
    }
    v["label"] = spec.label;
    json etas = json::array();
    json deltas = json::array();
    for (const AgentParams<double>& p : spec.params) {
      etas.push_back(p.eta);
      deltas.push_back(p.delta);
    }
    v["eta"] = etas;
    v["delta"] = deltas;
    variants.push_back(std::move(v));
  }
  j["variants"] = variants;
  j["beta_sweep"] = config.beta_sweep;
  json x0 = json::array();
  for (const VectorX<double>& x : resolved.specs.front().x0) {
    json coords = json::array();
    for (Eigen::Index k = 0; k < x.size(); ++k) coords.push_back(x[k]);
    x0.push_back(std::move(coords));
  }
  j["x0"] = x0;
  j["out_dir"] = config.out_dir;
  if (config.scenario == "quadratic") {
    j["quadratic"] = {{"agents", config.quadratic.num_agents},
                      {"dim", config.quadratic.dim},
                      {"coupling", config.quadratic.coupling},
                      {"lo", config.quadratic.lo},
                      {"hi", config.quadratic.hi},
                      {"centers", config.quadratic.centers}};
  }
  return j;
}

void write_manifest_file(const RunManifest& manifest, const fs::path& dir) {
  json j;
  j["schema_version"] = kSchemaVersion;
  j["library_version"] = std::string(kLibraryVersion);
  j["command"] = manifest.command;
  j["config_hash"] = manifest.hash;
  j["master_seed"] = manifest.master_seed;
  j["trial_seeds"] = manifest.trial_seeds;
  j["files"] = manifest.files;
  j["notes"] = manifest.notes;
  j["samples_per_trial"] = manifest.samples_per_trial;
  j["wall_clock_seconds"] = manifest.wall_clock_seconds;
  j["config"] = manifest.resolved_config;
  write_file_atomic(dir / "manifest.json", j.dump(2) + "\n");
}

RunManifest make_manifest(const std::string& command, const ExperimentConfig& config,
                          const ResolvedExperiment& resolved, int jobs) {
  RunManifest manifest;
  manifest.command = command;
  manifest.resolved_config = resolved_json(config, resolved);
  manifest.hash = to_hex(fnv1a64(manifest.resolved_config.dump()));
  manifest.master_seed = config.seed;
  for (int k = 0; k < config.trials; ++k)
    manifest.trial_seeds.push_back(noise_seed(config.seed, k));
  manifest.notes = resolved.notes;
  manifest.jobs = jobs;
  manifest.samples_per_trial = 0;
  for (const long n : resolved.samples_per_episode) manifest.samples_per_trial += n;
  return manifest;
}

int effective_jobs(const RunOptions& options, int total_tasks) {
  int jobs = options.jobs;
  if (jobs <= 0) jobs = static_cast<int>(std::thread::hardware_concurrency());
  if (jobs <= 0) jobs = 1;
  return std::max(1, std::min(jobs, total_tasks));
}

}  // namespace

ConfigError::ConfigError(std::vector<std::string> all_violations)
    : std::runtime_error(join_lines(all_violations)), violations(std::move(all_violations)) {}

AgentParams<double> default_variant_params(VariantKind kind) {
  switch (kind) {
    case VariantKind::kMomentum: return {0.006, 0.10};
    case VariantKind::kResidualFeedback: return {0.002, 0.10};
    case VariantKind::kSampleReuse: return {0.002, 0.30};
    case VariantKind::kOnePoint: return {0.002, 0.30};
  }
  return {0.001, 0.1};
}

std::vector<std::string> validate_config_json(const json& doc, ExperimentConfig* out) {
  std::vector<std::string> violations;
  ExperimentConfig config;

  if (!doc.is_object()) {
    violations.push_back("config root must be a JSON object");
    return violations;
  }

  check_keys(doc, "/",
             {"scenario", "T", "trials", "seed", "bins", "support", "alpha", "schedule", "gamma",
              "variants", "beta_sweep", "quadratic", "x0", "out_dir"},
             violations);

  if (doc.contains("scenario")) {
    if (!doc["scenario"].is_string())
      violations.push_back("scenario must be a string");
    else
      config.scenario = doc["scenario"].get<std::string>();
  }
  if (doc.contains("T")) read_positive_integer(doc["T"], "T", 1, config.horizon, violations);
  if (doc.contains("trials")) {
    long trials = 0;
    if (read_positive_integer(doc["trials"], "trials", 1, trials, violations))
      config.trials = static_cast<int>(trials);
  }
  if (doc.contains("seed")) {
    const json& s = doc["seed"];
    if (s.is_number_unsigned())
      config.seed = s.get<std::uint64_t>();
    else if (s.is_number_integer() && s.get<long long>() >= 0)
      config.seed = static_cast<std::uint64_t>(s.get<long long>());
    else
      violations.push_back("seed must be a non-negative integer");
  }
  if (doc.contains("bins")) read_positive_integer(doc["bins"], "bins", 1, config.bins, violations);

  if (doc.contains("support")) {
    const json& s = doc["support"];
    if (!s.is_object()) {
      violations.push_back("support must be an object {lo, hi}");
    } else {
      check_keys(s, "support", {"lo", "hi"}, violations);
      double lo = 0, hi = 0;
      bool ok = s.contains("lo") && s.contains("hi");
      if (!ok) violations.push_back("support requires both lo and hi");
      ok = ok && read_real(s["lo"], "support.lo", lo, violations);
      ok = ok && read_real(s["hi"], "support.hi", hi, violations);
      if (ok && !(lo < hi))
        violations.push_back("support requires lo < hi");
      else if (ok)
        config.support = {lo, hi};
    }
  }

  if (doc.contains("alpha")) {
    const json& a = doc["alpha"];
    std::vector<double> alphas;
    bool ok = true;
    if (a.is_number()) {
      alphas.push_back(a.get<double>());
    } else if (a.is_array() && !a.empty()) {
      for (const json& item : a) {
        double value = 0;
        if (!read_real(item, "alpha[]", value, violations)) ok = false;
        alphas.push_back(value);
      }
    } else {
      violations.push_back("alpha must be a number or a non-empty array of numbers");
      ok = false;
    }
    if (ok) {
      for (const double value : alphas) {
        if (!(value > 0.0) || !(value <= 1.0)) {
          violations.push_back("alpha values must lie in (0, 1]");
          ok = false;
          break;
        }
      }
    }
    if (ok) config.alphas = std::move(alphas);
  }

  if (doc.contains("schedule")) {
    const json& s = doc["schedule"];
    if (!s.is_object()) {
      violations.push_back("schedule must be an object with {a, b} or {n}");
    } else {
      check_keys(s, "schedule", {"a", "b", "n"}, violations);
      if (s.contains("n")) {
        if (s.contains("a") || s.contains("b"))
          violations.push_back("schedule.n excludes schedule.a and schedule.b");
        if (!s["n"].is_array() || s["n"].empty()) {
          violations.push_back("schedule.n must be a non-empty array of sample counts");
        } else {
          std::vector<long> counts;
          bool ok = true;
          for (const json& item : s["n"]) {
            long value = 0;
            if (!read_positive_integer(item, "schedule.n[]", 1, value, violations)) ok = false;
            counts.push_back(value);
          }
          if (ok) config.n_override = std::move(counts);
        }
      } else {
        if (s.contains("a")) {
          double a_value = 0;
          if (read_real(s["a"], "schedule.a", a_value, violations)) {
            if (!(a_value > 0.0) || !(a_value < 1.0))
              violations.push_back("schedule.a must lie in (0, 1)");
            else
              config.schedule_a = a_value;
          }
        }
        if (s.contains("b")) {
          double b_value = 0;
          if (read_real(s["b"], "schedule.b", b_value, violations)) {
            if (!(b_value > 0.0) || !(b_value < 1.0))
              violations.push_back("schedule.b must lie in (0, 1)");
            else
              config.schedule_b = b_value;
          }
        }
      }
    }
  }

  if (doc.contains("gamma")) {
    double gamma = 0;
    if (read_real(doc["gamma"], "gamma", gamma, violations)) {
      if (!(gamma > 0.0) || !(gamma < 1.0))
        violations.push_back("gamma must lie in (0, 1)");
      else
        config.gamma = gamma;
    }
  }

  if (doc.contains("variants")) {
    const json& vs = doc["variants"];
    if (!vs.is_array()) {
      violations.push_back("variants must be an array");
    } else if (vs.empty()) {
      violations.push_back("variants must be non-empty");
    } else {
      std::vector<VariantSpec> specs;
      for (std::size_t i = 0; i < vs.size(); ++i)
        parse_variant(vs[i], "variants[" + std::to_string(i) + "]", violations, specs);
      config.variants = std::move(specs);
    }
  }

  if (doc.contains("beta_sweep")) {
    const json& bs = doc["beta_sweep"];
    if (!bs.is_array() || bs.empty()) {
      violations.push_back("beta_sweep must be a non-empty array");
    } else {
      std::vector<double> betas;
      bool ok = true;
      for (const json& item : bs) {
        double value = 0;
        if (!read_real(item, "beta_sweep[]", value, violations)) ok = false;
        if (ok && (!(value >= 0.0) || !(value < 1.0))) {
          violations.push_back("beta_sweep values must lie in [0, 1)");
          ok = false;
        }
        betas.push_back(value);
      }
      if (ok) config.beta_sweep = std::move(betas);
    }
  }

  if (doc.contains("quadratic")) {
    const json& q = doc["quadratic"];
    if (!q.is_object()) {
      violations.push_back("quadratic must be an object");
    } else {
      check_keys(q, "quadratic", {"agents", "dim", "coupling", "lo", "hi", "centers"}, violations);
      QuadraticParams params;
      if (q.contains("agents")) {
        long agents = 0;
        if (read_positive_integer(q["agents"], "quadratic.agents", 1, agents, violations))
          params.num_agents = static_cast<int>(agents);
      }
      if (q.contains("dim")) {
        long dim = 0;
        if (read_positive_integer(q["dim"], "quadratic.dim", 1, dim, violations))
          params.dim = static_cast<int>(dim);
      }
      if (q.contains("coupling")) {
        double coupling = 0;
        if (read_real(q["coupling"], "quadratic.coupling", coupling, violations)) {
          if (!(coupling >= 0.0))
            violations.push_back("quadratic.coupling must be non-negative");
          else
            params.coupling = coupling;
        }
      }
      if (q.contains("lo")) read_real(q["lo"], "quadratic.lo", params.lo, violations);
      if (q.contains("hi")) read_real(q["hi"], "quadratic.hi", params.hi, violations);
      if (!(params.lo < params.hi)) violations.push_back("quadratic requires lo < hi");
      if (q.contains("centers")) {
        if (!q["centers"].is_array()) {
          violations.push_back("quadratic.centers must be an array of vectors");
        } else {
          for (const json& center : q["centers"]) {
            std::vector<double> coords;
            if (!center.is_array()) {
              violations.push_back("quadratic.centers entries must be arrays");
              continue;
            }
            for (const json& value : center) {
              double c = 0;
              read_real(value, "quadratic.centers[][]", c, violations);
              coords.push_back(c);
            }
            params.centers.push_back(std::move(coords));
          }
          if (!params.centers.empty() &&
              static_cast<int>(params.centers.size()) != params.num_agents)
            violations.push_back("quadratic.centers must list one center per agent");
          for (const auto& c : params.centers) {
            if (static_cast<int>(c.size()) != params.dim) {
              violations.push_back("quadratic.centers entries must have length dim");
              break;
            }
          }
        }
      }
      config.quadratic = std::move(params);
    }
  }

  if (doc.contains("x0")) {
    const json& x0 = doc["x0"];
    if (!x0.is_array() || x0.empty()) {
      violations.push_back("x0 must be a non-empty array of per-agent vectors");
    } else {
      std::vector<std::vector<double>> points;
      for (const json& point : x0) {
        std::vector<double> coords;
        if (!point.is_array()) {
          violations.push_back("x0 entries must be arrays");
          continue;
        }
        for (const json& value : point) {
          double c = 0;
          read_real(value, "x0[][]", c, violations);
          coords.push_back(c);
        }
        points.push_back(std::move(coords));
      }
      config.x0 = std::move(points);
    }
  }

  if (doc.contains("out_dir")) {
    if (!doc["out_dir"].is_string() || doc["out_dir"].get<std::string>().empty())
      violations.push_back("out_dir must be a non-empty string");
    else
      config.out_dir = doc["out_dir"].get<std::string>();
  }

  if (violations.empty() && out != nullptr) *out = std::move(config);
  return violations;
}

ExperimentConfig parse_config(const json& doc) {
  ExperimentConfig config;
  std::vector<std::string> violations = validate_config_json(doc, &config);
  if (!violations.empty()) throw ConfigError(std::move(violations));
  return config;
}

ExperimentConfig load_config_file(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError({"cannot open config file " + path.string()});
  json doc;
  try {
    is >> doc;
  } catch (const json::parse_error& err) {
    throw ConfigError({std::string("config is not valid JSON: ") + err.what()});
  }
  return parse_config(doc);
}

nlohmann::json resolved_config_json(const ExperimentConfig& config) {
  return resolved_json(config, resolve(config));
}

std::string config_hash(const ExperimentConfig& config) {
  return to_hex(fnv1a64(resolved_config_json(config).dump()));
}

ResolvedExperiment resolve(const ExperimentConfig& config) {
  std::vector<std::string> violations;
  ResolvedExperiment resolved;

  if (config.horizon < 1) violations.push_back("T must be >= 1");
  if (config.trials < 1) violations.push_back("trials must be >= 1");
  if (config.bins < 1) violations.push_back("bins must be >= 1");
  if (!(config.gamma > 0.0) || !(config.gamma < 1.0))
    violations.push_back("gamma must lie in (0, 1)");

  if (config.scenario == "cournot") {
    resolved.game = std::make_shared<CournotGame<double>>();
  } else if (config.scenario == "quadratic") {
    const QuadraticParams& q = config.quadratic;
    if (!(q.lo < q.hi)) violations.push_back("quadratic requires lo < hi");
    if (q.num_agents < 1 || q.dim < 1)
      violations.push_back("quadratic requires agents >= 1 and dim >= 1");
    if (violations.empty()) {
      std::vector<VectorX<double>> centers;
      for (int i = 0; i < q.num_agents; ++i) {
        VectorX<double> c(q.dim);
        if (!q.centers.empty()) {
          if (static_cast<int>(q.centers.size()) != q.num_agents ||
              static_cast<int>(q.centers[i].size()) != q.dim) {
            violations.push_back("quadratic.centers must be agents x dim");
            break;
          }
          for (int k = 0; k < q.dim; ++k) c[k] = q.centers[i][k];
        } else {
          // Default pattern: alternate 35%/65% of the box per dimension.
          for (int k = 0; k < q.dim; ++k)
            c[k] = q.lo + (q.hi - q.lo) * (k % 2 == 0 ? 0.35 : 0.65);
        }
        centers.push_back(std::move(c));
      }
      if (violations.empty()) {
        BoxActionSet<double> box(ArrayX<double>::Constant(q.dim, q.lo),
                                 ArrayX<double>::Constant(q.dim, q.hi));
        resolved.game =
            std::make_shared<QuadraticTestGame<double>>(std::move(centers), q.coupling, box);
      }
    }
  } else {
    violations.push_back("unknown scenario '" + config.scenario +
                         "'; expected cournot or quadratic");
  }
  if (!violations.empty()) throw ConfigError(std::move(violations));

  const GameOracle<double>& game = *resolved.game;
  const int n_agents = game.num_agents();

  for (const double a : config.alphas) {
    if (!(a > 0.0) || !(a <= 1.0)) {
      violations.push_back("alpha values must lie in (0, 1]");
      break;
    }
  }
  if (violations.empty()) {
    if (config.alphas.size() == 1) {
      resolved.alphas.assign(static_cast<std::size_t>(n_agents),
                             RiskLevel<double>(config.alphas[0]));
    } else if (static_cast<int>(config.alphas.size()) == n_agents) {
      for (const double a : config.alphas) resolved.alphas.emplace_back(a);
    } else {
      violations.push_back("alpha must list one risk level per agent (or a single value)");
    }
  }
  if (resolved.alphas.empty())
    resolved.alphas.assign(static_cast<std::size_t>(n_agents), RiskLevel<double>(1.0));

  std::optional<CostSupport<double>> support;
  try {
    if (config.support)
      support.emplace(config.support->first, config.support->second, config.bins);
    else
      support.emplace(game.cost_support(config.bins));
  } catch (const std::invalid_argument& err) {
    violations.push_back(std::string("support: ") + err.what());
  }

  std::optional<SamplingSchedule<double>> schedule;
  if (config.n_override) {
    if (static_cast<long>(config.n_override->size()) != config.horizon)
      violations.push_back("schedule.n must list exactly T sample counts");
    else
      resolved.samples_per_episode = *config.n_override;
  } else {
    try {
      schedule.emplace(config.schedule_a, config.schedule_b, game.cost_bound(), config.horizon);
      resolved.samples_per_episode.reserve(static_cast<std::size_t>(config.horizon));
      for (long t = 1; t <= config.horizon; ++t)
        resolved.samples_per_episode.push_back(sample_count(t, *schedule));
    } catch (const std::invalid_argument& err) {
      violations.push_back(std::string("schedule: ") + err.what());
    }
  }
  if (!resolved.samples_per_episode.empty()) {
    resolved.dkw.resize(config.horizon);
    for (long t = 1; t <= config.horizon; ++t) {
      resolved.dkw[t - 1] =
          schedule ? dkw_radius(t, *schedule, config.gamma)
                   : dkw_radius_for_count(resolved.samples_per_episode[t - 1], config.horizon,
                                          config.gamma);
    }
  }

  std::vector<VectorX<double>> x0;
  if (config.x0) {
    if (static_cast<int>(config.x0->size()) != n_agents) {
      violations.push_back("x0 must list one starting action per agent");
    } else {
      for (int i = 0; i < n_agents; ++i) {
        const std::vector<double>& coords = (*config.x0)[i];
        if (static_cast<long>(coords.size()) != game.action_set(i).dim()) {
          violations.push_back("x0[" + std::to_string(i) + "] has the wrong dimension");
          continue;
        }
        VectorX<double> x(coords.size());
        for (std::size_t k = 0; k < coords.size(); ++k) x[static_cast<Eigen::Index>(k)] = coords[k];
        x0.push_back(std::move(x));
      }
    }
  } else {
    // Default start: the upper corner of the box; projected onto X^delta when
    // each trial initializes.
    for (int i = 0; i < n_agents; ++i) x0.push_back(game.action_set(i).hi.matrix());
  }

  std::vector<VariantSpec> variant_specs = config.variants;
  if (variant_specs.empty()) {
    variant_specs = {VariantSpec{Variant::momentum(kDefaultMomentumBeta), {}, {}, {}},
                     VariantSpec{Variant::residual_feedback(), {}, {}, {}},
                     VariantSpec{Variant::sample_reuse(), {}, {}, {}},
                     VariantSpec{Variant::one_point(), {}, {}, {}}};
  }

  bool sample_reuse_present = false;
  for (std::size_t v = 0; v < variant_specs.size(); ++v) {
    const VariantSpec& spec = variant_specs[v];
    Variant variant = spec.variant;
    std::vector<AgentParams<double>> params;
    bool warned = false;

    for (int i = 0; i < n_agents; ++i) {
      const BoxActionSet<double>& set = game.action_set(i);
      AgentParams<double> p{};
      if (spec.horizon_l0_scale) {
        const ScheduleOutput<double> out =
            horizon_schedule<double>(config.horizon, config.schedule_a, set.diameter(),
                                      game.cost_bound(), n_agents, set.dim(),
                                      *spec.horizon_l0_scale);
        p = AgentParams<double>{out.eta, out.delta};
        if (variant.kind == VariantKind::kMomentum && i == 0)
          variant = Variant::momentum(out.beta);
        warned = warned || out.horizon_warning;
      } else {
        const AgentParams<double> defaults = default_variant_params(variant.kind);
        p.eta = spec.eta.value_or(defaults.eta);
        p.delta = spec.delta.value_or(defaults.delta);
      }
      if (!(p.eta > 0.0))
        violations.push_back("variant " + std::to_string(v) + ": eta must be positive");
      if (!(p.delta > 0.0) || !(p.delta < set.min_side() / 2.0))
        violations.push_back("variant " + std::to_string(v) +
                             ": delta too large for action set (agent " + std::to_string(i) + ")");
      params.push_back(p);
    }

    if (warned)
      resolved.notes.push_back("variant '" + variant.label() + "': T=" +
                               std::to_string(config.horizon) +
                               " is below the horizon schedule validity threshold (8 N^(2/3))^(1/a)");
    sample_reuse_present = sample_reuse_present || variant.kind == VariantKind::kSampleReuse;

    if (!support || resolved.samples_per_episode.empty() || !violations.empty()) continue;

    SimulationSpec<double> sim;
    sim.game = resolved.game.get();
    sim.variant = variant;
    sim.label = variant.label();
    sim.params = std::move(params);
    sim.alphas = resolved.alphas;
    sim.support = *support;
    sim.horizon = config.horizon;
    sim.samples_per_episode = resolved.samples_per_episode;
    sim.dkw = resolved.dkw;
    sim.x0 = x0;
    resolved.specs.push_back(std::move(sim));
  }

  if (sample_reuse_present)
    resolved.notes.push_back(
        "sample_reuse builds an unweighted pooled EDF over episodes t and t-1 and feeds the "
        "one-point gradient");

  for (std::size_t a = 0; a < resolved.specs.size(); ++a) {
    for (std::size_t b = a + 1; b < resolved.specs.size(); ++b) {
      if (resolved.specs[a].label == resolved.specs[b].label)
        violations.push_back("duplicate variant label '" + resolved.specs[a].label + "'");
    }
  }

  if (!violations.empty()) throw ConfigError(std::move(violations));
  if (resolved.specs.empty()) throw ConfigError({"no variants resolved"});
  return resolved;
}

std::vector<std::vector<TrialTrace<double>>> simulate_grid(const ResolvedExperiment& resolved,
                                                           const ExperimentConfig& config,
                                                           const RunOptions& options) {
  const int n_variants = static_cast<int>(resolved.specs.size());
  const int trials = config.trials;
  const int total = n_variants * trials;

  std::vector<std::vector<TrialTrace<double>>> results(static_cast<std::size_t>(n_variants));
  for (auto& slot : results) slot.resize(static_cast<std::size_t>(trials));

  const int jobs = effective_jobs(options, total);
  std::atomic<int> next{0};
  std::mutex error_mutex;
  int first_error_task = total;
  std::exception_ptr first_error;

  auto worker = [&]() {
    for (;;) {
      const int task = next.fetch_add(1);
      if (task >= total) return;
      const int v = task / trials;
      const int k = task % trials;
      try {
        results[static_cast<std::size_t>(v)][static_cast<std::size_t>(k)] =
            simulate_trial(resolved.specs[static_cast<std::size_t>(v)], k, config.seed);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (task < first_error_task) {
          first_error_task = task;
          first_error = std::current_exception();
        }
      }
    }
  };

  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(jobs));
    for (int j = 0; j < jobs; ++j) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
  }
  if (first_error) std::rethrow_exception(first_error);

  if (!options.quiet) {
    for (int v = 0; v < n_variants; ++v) {
      std::cout << "simulated '" << resolved.specs[static_cast<std::size_t>(v)].label << "': "
                << trials << " trial(s), T=" << config.horizon << "\n";
    }
  }
  return results;
}

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  char buf[32];
  const auto result = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, result.ptr);
}

void write_trace_csv(std::ostream& os,
                     std::span<const std::vector<TrialTrace<double>>> per_variant) {
  os << "trial,episode,agent,variant,x,xhat,cvar_est,cvar_true,n_t,r_t,grad_norm,clamps\n";
  for (const std::vector<TrialTrace<double>>& traces : per_variant) {
    for (const TrialTrace<double>& trace : traces) {
      for (long t = 0; t < trace.horizon; ++t) {
        for (int i = 0; i < trace.num_agents; ++i) {
          os << trace.trial << ',' << (t + 1) << ',' << i << ',' << trace.variant << ','
             << cell(trace.x[static_cast<std::size_t>(i)].row(t)) << ','
             << cell(trace.xhat[static_cast<std::size_t>(i)].row(t)) << ','
             << format_number(trace.cvar_est(t, i)) << ',' << format_number(trace.cvar_true(t, i))
             << ',' << trace.samples[static_cast<std::size_t>(t)] << ','
             << format_number(trace.dkw[t]) << ',' << format_number(trace.grad_norm(t, i)) << ','
             << trace.clamps(t, i) << '\n';
        }
      }
    }
  }
}

std::vector<AggregateSeries<double>> standard_aggregates(
    const ResolvedExperiment& resolved, std::span<const TrialTrace<double>> traces) {
  std::vector<AggregateSeries<double>> out;
  if (traces.empty()) return out;
  const GameOracle<double>& game = *resolved.game;
  const int n_agents = traces.front().num_agents;

  for (int i = 0; i < n_agents; ++i) {
    const Eigen::Index dim = game.action_set(i).dim();
    for (Eigen::Index k = 0; k < dim; ++k) {
      std::string metric = "x_a" + std::to_string(i);
      if (dim > 1) metric += "_d" + std::to_string(k);
      out.push_back(aggregate<double>(traces, metric, [i, k](const TrialTrace<double>& trace) {
        return VectorX<double>(trace.x[static_cast<std::size_t>(i)].col(k));
      }));
    }
    out.push_back(aggregate<double>(traces, "cvar_est_a" + std::to_string(i),
                                    [i](const TrialTrace<double>& trace) {
                                      return VectorX<double>(trace.cvar_est.col(i));
                                    }));
    out.push_back(aggregate<double>(traces, "cvar_true_a" + std::to_string(i),
                                    [i](const TrialTrace<double>& trace) {
                                      return VectorX<double>(trace.cvar_true.col(i));
                                    }));
    out.push_back(aggregate<double>(traces, "grad_norm_a" + std::to_string(i),
                                    [i](const TrialTrace<double>& trace) {
                                      return VectorX<double>(trace.grad_norm.col(i));
                                    }));
    if (game.has_analytic_cvar()) {
      const std::vector<RiskLevel<double>>& alphas = resolved.alphas;
      out.push_back(aggregate<double>(
          traces, "cvar_true_mean_a" + std::to_string(i),
          [i, &game, &alphas](const TrialTrace<double>& trace) {
            VectorX<double> series(trace.horizon);
            ActionProfile<double> profile;
            profile.actions.resize(static_cast<std::size_t>(trace.num_agents));
            for (long t = 0; t < trace.horizon; ++t) {
              for (int j = 0; j < trace.num_agents; ++j)
                profile.actions[static_cast<std::size_t>(j)] =
                    trace.x[static_cast<std::size_t>(j)].row(t).transpose();
              series[t] = game.analytic_cvar_agent(i, profile, alphas[static_cast<std::size_t>(i)]);
            }
            return series;
          }));
    }
  }
  return out;
}

void write_aggregate_csv(
    std::ostream& os,
    std::span<const std::pair<std::string, std::vector<AggregateSeries<double>>>> per_variant) {
  os << "episode,variant,metric,mean,std,trials\n";
  for (const auto& [label, series_list] : per_variant) {
    for (const AggregateSeries<double>& series : series_list) {
      for (Eigen::Index t = 0; t < series.mean.size(); ++t) {
        os << (t + 1) << ',' << label << ',' << series.metric << ','
           << format_number(series.mean[t]) << ',' << format_number(series.stddev[t]) << ','
           << series.trials << '\n';
      }
    }
  }
}

namespace {

std::vector<std::pair<std::string, std::vector<AggregateSeries<double>>>> grid_aggregates(
    const ResolvedExperiment& resolved, const std::vector<std::vector<TrialTrace<double>>>& grid) {
  std::vector<std::pair<std::string, std::vector<AggregateSeries<double>>>> out;
  for (std::size_t v = 0; v < resolved.specs.size(); ++v)
    out.emplace_back(resolved.specs[v].label, standard_aggregates(resolved, grid[v]));
  return out;
}

RunManifest run_and_write(const std::string& command, const ExperimentConfig& config,
                          const fs::path& out_dir, const RunOptions& options, bool write_traces,
                          const std::string& aggregate_name) {
  const auto start = std::chrono::steady_clock::now();
  ResolvedExperiment resolved = resolve(config);
  const int total = static_cast<int>(resolved.specs.size()) * config.trials;
  const int jobs = effective_jobs(options, total);

  const auto grid = simulate_grid(resolved, config, options);

  fs::create_directories(out_dir);
  RunManifest manifest = make_manifest(command, config, resolved, jobs);

  if (write_traces) {
    std::ostringstream trace_os;
    write_trace_csv(trace_os, grid);
    write_file_atomic(out_dir / "trace.csv", trace_os.str());
    manifest.files.push_back("trace.csv");
  }

  std::ostringstream agg_os;
  const auto aggregates = grid_aggregates(resolved, grid);
  write_aggregate_csv(agg_os, aggregates);
  write_file_atomic(out_dir / aggregate_name, agg_os.str());
  manifest.files.push_back(aggregate_name);

  manifest.wall_clock_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  write_manifest_file(manifest, out_dir);
  manifest.files.push_back("manifest.json");
  return manifest;
}

}  // namespace

RunManifest run(const ExperimentConfig& config, const fs::path& out_dir,
                const RunOptions& options) {
  return run_and_write("run", config, out_dir, options, /*write_traces=*/true, "aggregate.csv");
}

RunManifest compare(const ExperimentConfig& config, const fs::path& out_dir,
                    const RunOptions& options) {
  ResolvedExperiment resolved = resolve(config);
  if (resolved.specs.size() < 2) throw ConfigError({"compare requires at least two variants"});
  return run_and_write("compare", config, out_dir, options, /*write_traces=*/false,
                       "comparison.csv");
}

RunManifest sweep_beta(const ExperimentConfig& config, std::span<const double> betas,
                       const fs::path& out_dir, const RunOptions& options) {
  std::vector<std::string> violations;
  if (betas.empty()) violations.push_back("beta sweep requires at least one beta");
  for (const double beta : betas) {
    if (!(beta >= 0.0) || !(beta < 1.0)) {
      violations.push_back("beta sweep values must lie in [0, 1)");
      break;
    }
  }
  if (!violations.empty()) throw ConfigError(std::move(violations));

  // Same (eta, delta) for every beta: differences are attributable to beta
  // alone, and identical per-trial seeds pair the comparisons.
  std::optional<double> eta;
  std::optional<double> delta;
  for (const VariantSpec& spec : config.variants) {
    if (spec.variant.kind == VariantKind::kMomentum) {
      eta = spec.eta;
      delta = spec.delta;
      break;
    }
  }
  ExperimentConfig sweep_config = config;
  sweep_config.variants.clear();
  for (const double beta : betas)
    sweep_config.variants.push_back(VariantSpec{Variant::momentum(beta), eta, delta, {}});

  return run_and_write("sweep-beta", sweep_config, out_dir, options, /*write_traces=*/false,
                       "sweep.csv");
}

RunManifest emit_schedule(const ExperimentConfig& config, const fs::path& out_dir) {
  const auto start = std::chrono::steady_clock::now();
  ResolvedExperiment resolved = resolve(config);

  std::ostringstream os;
  os << "t,n_t,r_t\n";
  for (long t = 0; t < config.horizon; ++t) {
    os << (t + 1) << ',' << resolved.samples_per_episode[static_cast<std::size_t>(t)] << ','
       << format_number(resolved.dkw[t]) << '\n';
  }

  fs::create_directories(out_dir);
  write_file_atomic(out_dir / "schedule.csv", os.str());

  RunManifest manifest = make_manifest("emit-schedule", config, resolved, 1);
  manifest.files.push_back("schedule.csv");
  manifest.wall_clock_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  write_manifest_file(manifest, out_dir);
  manifest.files.push_back("manifest.json");
  return manifest;
}

}  // namespace ravl
