#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "ravl/evaluation.hpp"
#include "ravl/game.hpp"
#include "ravl/learner.hpp"
#include "ravl/rng.hpp"

namespace ravl {

// Stream purposes for the documented seed splitting rule.
inline constexpr std::uint64_t kNoiseStreamTag = 0x6E6F6973;      // game cost noise, per trial
inline constexpr std::uint64_t kDirectionStreamTag = 0x64697273;  // perturbations, per trial+agent

inline std::uint64_t noise_seed(std::uint64_t master, int trial) {
  return derive_seed(master, {kNoiseStreamTag, static_cast<std::uint64_t>(trial)});
}

inline std::uint64_t direction_seed(std::uint64_t master, int trial, int agent) {
  return derive_seed(master, {kDirectionStreamTag, static_cast<std::uint64_t>(trial),
                              static_cast<std::uint64_t>(agent)});
}

template <typename Scalar>
struct AgentParams {
  Scalar eta;
  Scalar delta;
};

// Fully-resolved inputs for simulating trials of a single variant.
template <typename Scalar>
struct SimulationSpec {
  const GameOracle<Scalar>* game = nullptr;
  Variant variant;
  std::string label;                        // trace / CSV variant label
  std::vector<AgentParams<Scalar>> params;  // per agent
  std::vector<RiskLevel<Scalar>> alphas;    // per agent
  CostSupport<Scalar> support{Scalar(-1), Scalar(1), 1};  // placeholder until resolved
  long horizon = 0;
  std::vector<long> samples_per_episode;  // n_t for t = 1..T
  VectorX<Scalar> dkw;                    // r_t for t = 1..T
  std::vector<VectorX<Scalar>> x0;        // initial mean actions, projected onto X_i^delta
};

// Runs the episode loop for one trial: perturbed plays, batched cost draws,
// per-agent learner updates, full trace recording. Feasibility of every
// played action is asserted; a violation is a contract error.
template <typename Scalar>
TrialTrace<Scalar> simulate_trial(const SimulationSpec<Scalar>& spec, int trial,
                                  std::uint64_t master_seed) {
  const GameOracle<Scalar>& game = *spec.game;
  const int n_agents = game.num_agents();
  const long horizon = spec.horizon;
  if (static_cast<int>(spec.params.size()) != n_agents ||
      static_cast<int>(spec.alphas.size()) != n_agents ||
      static_cast<int>(spec.x0.size()) != n_agents)
    throw std::invalid_argument("simulation spec is not resolved per agent");
  if (static_cast<long>(spec.samples_per_episode.size()) != horizon ||
      spec.dkw.size() != horizon)
    throw std::invalid_argument("per-episode schedules must cover the horizon");

  Rng noise_rng(noise_seed(master_seed, trial));
  std::vector<Rng> direction_rngs;
  direction_rngs.reserve(static_cast<std::size_t>(n_agents));
  for (int i = 0; i < n_agents; ++i)
    direction_rngs.emplace_back(direction_seed(master_seed, trial, i));

  std::vector<LearnerState<Scalar>> states;
  states.reserve(static_cast<std::size_t>(n_agents));
  for (int i = 0; i < n_agents; ++i) {
    const BoxActionSet<Scalar>& set = game.action_set(i);
    LearnerState<Scalar> state{
        project_shrunk<Scalar>(spec.x0[i], set, spec.params[i].delta),
        sample_unit_sphere<Scalar>(set.dim(), direction_rngs[i]),
        std::nullopt,
        std::nullopt,
        {},
        spec.alphas[i],
        spec.params[i].eta,
        spec.params[i].delta};
    states.push_back(std::move(state));
  }

  TrialTrace<Scalar> trace;
  trace.trial = trial;
  trace.variant = spec.label;
  trace.horizon = horizon;
  trace.num_agents = n_agents;
  trace.x.resize(n_agents);
  trace.xhat.resize(n_agents);
  for (int i = 0; i < n_agents; ++i) {
    trace.x[i].resize(horizon, game.action_set(i).dim());
    trace.xhat[i].resize(horizon, game.action_set(i).dim());
  }
  trace.cvar_est.resize(horizon, n_agents);
  trace.cvar_true.resize(horizon, n_agents);
  trace.grad_norm.resize(horizon, n_agents);
  trace.clamps.resize(horizon, n_agents);
  trace.samples = spec.samples_per_episode;
  trace.dkw = spec.dkw;

  std::vector<std::vector<Scalar>> cost_buffers(static_cast<std::size_t>(n_agents));

  for (long t = 0; t < horizon; ++t) {
    const long n_t = spec.samples_per_episode[static_cast<std::size_t>(t)];

    ActionProfile<Scalar> played;
    played.actions.resize(static_cast<std::size_t>(n_agents));
    for (int i = 0; i < n_agents; ++i) {
      played.actions[i] = perturb(states[i].x, states[i].u, states[i].delta);
      if (!game.action_set(i).contains(played.actions[i], Scalar(1e-9)))
        throw ContractViolation("played action left the action set; delta/projection mismatch");
    }

    for (int i = 0; i < n_agents; ++i) {
      cost_buffers[i].resize(static_cast<std::size_t>(n_t));
      trace.x[i].row(t) = states[i].x.transpose();
      trace.xhat[i].row(t) = played.actions[i].transpose();
    }

    for (long j = 0; j < n_t; ++j) {
      const VectorX<Scalar> costs = sample_costs(game, played, noise_rng);
      for (int i = 0; i < n_agents; ++i) cost_buffers[i][static_cast<std::size_t>(j)] = costs[i];
    }
    trace.total_cost_draws += n_t;

    if (game.has_analytic_cvar()) {
      trace.cvar_true.row(t) = game.analytic_cvar(played, spec.alphas).transpose();
    } else {
      trace.cvar_true.row(t).setConstant(std::numeric_limits<Scalar>::quiet_NaN());
    }

    for (int i = 0; i < n_agents; ++i) {
      StepResult<Scalar> result =
          learner_step<Scalar>(states[i], cost_buffers[i], spec.variant, spec.support,
                               game.action_set(i), direction_rngs[i]);
      trace.cvar_est(t, i) = result.cvar_estimate;
      trace.grad_norm(t, i) = result.gradient.norm();
      trace.clamps(t, i) = static_cast<std::int64_t>(result.clamped);
    }
  }

  return trace;
}

}  // namespace ravl
