#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "ravl/game.hpp"
#include "ravl/learner.hpp"

namespace ravl {

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

using MatrixXl = Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic>;

// Complete per-episode record of one trial run. Episodes are rows 0..T-1 for
// episode indices 1..T.
template <typename Scalar>
struct TrialTrace {
  int trial = 0;
  std::string variant;
  long horizon = 0;
  int num_agents = 0;

  std::vector<MatrixX<Scalar>> x;     // per agent: T x d_i mean actions
  std::vector<MatrixX<Scalar>> xhat;  // per agent: T x d_i played (perturbed) actions
  MatrixX<Scalar> cvar_est;           // T x N estimated CVaR of the running distribution
  MatrixX<Scalar> cvar_true;          // T x N true CVaR at the played profile
  MatrixX<Scalar> grad_norm;          // T x N
  MatrixXl clamps;                    // T x N out-of-support samples clamped into boundary bins
  std::vector<long> samples;          // n_t
  VectorX<Scalar> dkw;                // r_t diagnostic radius
  long total_cost_draws = 0;          // sum of n_t, per agent
};

// Per-episode mean and sample standard deviation of a metric across trials.
template <typename Scalar>
struct AggregateSeries {
  std::string metric;
  VectorX<Scalar> mean;
  VectorX<Scalar> stddev;
  int trials = 0;
  bool stddev_defined = true;  // false: fewer than 2 trials, stddev reported as 0
};

// Aggregates selector(trace) across trials. All traces must share the horizon.
template <typename Scalar, typename Selector>
AggregateSeries<Scalar> aggregate(std::span<const TrialTrace<Scalar>> traces, std::string metric,
                                  Selector&& select) {
  if (traces.empty()) throw std::invalid_argument("no traces to aggregate");
  const long horizon = traces.front().horizon;
  const int n = static_cast<int>(traces.size());

  MatrixX<Scalar> values(horizon, n);
  for (int j = 0; j < n; ++j) {
    if (traces[j].horizon != horizon)
      throw std::invalid_argument("traces disagree on the horizon");
    VectorX<Scalar> series = select(traces[j]);
    if (series.size() != horizon) throw std::invalid_argument("metric series has wrong length");
    values.col(j) = series;
  }

  AggregateSeries<Scalar> out;
  out.metric = std::move(metric);
  out.trials = n;
  out.mean = values.rowwise().mean();
  if (n < 2) {
    out.stddev = VectorX<Scalar>::Zero(horizon);
    out.stddev_defined = false;
  } else {
    MatrixX<Scalar> centered = values.colwise() - out.mean;
    out.stddev = (centered.array().square().rowwise().sum() / Scalar(n - 1)).sqrt().matrix();
  }
  return out;
}

// How the true CVaR is obtained: a game's closed form, or Monte-Carlo over
// fresh cost draws reduced through the exact sorted-sample oracle.
struct CvarMethod {
  enum class Kind { kAnalytic, kMonteCarlo };
  Kind kind = Kind::kAnalytic;
  long draws = 0;
  std::uint64_t seed = 0;

  static CvarMethod analytic() { return {}; }
  static CvarMethod monte_carlo(long draws, std::uint64_t seed) {
    if (draws < 1) throw std::invalid_argument("monte_carlo requires at least one draw");
    return {Kind::kMonteCarlo, draws, seed};
  }
};

template <typename Scalar>
VectorX<Scalar> true_cvar(const GameOracle<Scalar>& game, const ActionProfile<Scalar>& x,
                          const std::vector<RiskLevel<Scalar>>& alphas, const CvarMethod& method) {
  if (static_cast<int>(alphas.size()) != game.num_agents())
    throw std::invalid_argument("expected one risk level per agent");
  if (method.kind == CvarMethod::Kind::kAnalytic) {
    if (!game.has_analytic_cvar())
      throw std::invalid_argument(std::string(game.name()) +
                                  " exposes no closed-form CVaR; use monte_carlo");
    return game.analytic_cvar(x, alphas);
  }

  Rng rng(method.seed);
  const int n = game.num_agents();
  MatrixX<Scalar> costs(method.draws, n);
  for (long m = 0; m < method.draws; ++m) costs.row(m) = sample_costs(game, x, rng).transpose();

  const Scalar weight = Scalar(1) / static_cast<Scalar>(method.draws);
  VectorX<Scalar> out(n);
  std::vector<std::pair<Scalar, Scalar>> weighted(static_cast<std::size_t>(method.draws));
  for (int i = 0; i < n; ++i) {
    for (long m = 0; m < method.draws; ++m) weighted[static_cast<std::size_t>(m)] = {costs(m, i), weight};
    out[i] = cvar_exact_oracle(std::span<const std::pair<Scalar, Scalar>>(weighted), alphas[i]);
  }
  return out;
}

// Regret of one agent over a completed trace: cumulative true CVaR along the
// played trajectory minus the best fixed action in hindsight. The comparator
// minimum is taken over a uniform grid on X_i (grid_points per dimension),
// which is exact enough for the closed-form scenarios with d_i <= 2.
template <typename Scalar>
Scalar regret(const TrialTrace<Scalar>& trace, const GameOracle<Scalar>& game, int agent,
              RiskLevel<Scalar> alpha, int grid_points = 1001) {
  if (trace.horizon < 1) throw std::invalid_argument("trace is empty");
  if (agent < 0 || agent >= trace.num_agents) throw std::invalid_argument("agent out of range");
  if (grid_points < 2) throw std::invalid_argument("need at least two grid points");
  if (!game.has_analytic_cvar())
    throw std::invalid_argument("regret needs a closed-form CVaR; use Monte-Carlo scenarios only");
  const BoxActionSet<Scalar>& set = game.action_set(agent);
  if (set.dim() > 2)
    throw std::invalid_argument(
        "grid comparator supports d_i <= 2; use Monte-Carlo scenarios only");

  const long horizon = trace.horizon;
  std::vector<ActionProfile<Scalar>> profiles(static_cast<std::size_t>(horizon));
  for (long t = 0; t < horizon; ++t) {
    profiles[t].actions.resize(static_cast<std::size_t>(trace.num_agents));
    for (int j = 0; j < trace.num_agents; ++j)
      profiles[t].actions[j] = trace.xhat[j].row(t).transpose();
  }

  Scalar played = Scalar(0);
  for (long t = 0; t < horizon; ++t)
    played += game.analytic_cvar_agent(agent, profiles[t], alpha);

  // Enumerate the grid; profiles are reused with the agent's slot swapped.
  std::vector<VectorX<Scalar>> candidates;
  if (set.dim() == 1) {
    candidates.reserve(static_cast<std::size_t>(grid_points));
    for (int j = 0; j < grid_points; ++j) {
      VectorX<Scalar> c(1);
      c[0] = set.lo[0] + (set.hi[0] - set.lo[0]) * Scalar(j) / Scalar(grid_points - 1);
      candidates.push_back(std::move(c));
    }
  } else {
    candidates.reserve(static_cast<std::size_t>(grid_points) * grid_points);
    for (int j0 = 0; j0 < grid_points; ++j0) {
      for (int j1 = 0; j1 < grid_points; ++j1) {
        VectorX<Scalar> c(2);
        c[0] = set.lo[0] + (set.hi[0] - set.lo[0]) * Scalar(j0) / Scalar(grid_points - 1);
        c[1] = set.lo[1] + (set.hi[1] - set.lo[1]) * Scalar(j1) / Scalar(grid_points - 1);
        candidates.push_back(std::move(c));
      }
    }
  }

  Scalar best = std::numeric_limits<Scalar>::infinity();
  for (const VectorX<Scalar>& candidate : candidates) {
    Scalar sum = Scalar(0);
    for (long t = 0; t < horizon; ++t) {
      profiles[t].actions[static_cast<std::size_t>(agent)] = candidate;
      sum += game.analytic_cvar_agent(agent, profiles[t], alpha);
    }
    best = std::min(best, sum);
  }
  return played - best;
}

// DKW confidence radius r_t = sqrt(ln(2T/gamma) / (2 b U^2 (T-t+1)^a)).
template <typename Scalar>
Scalar dkw_radius(long t, const SamplingSchedule<Scalar>& schedule, Scalar gamma) {
  if (!(gamma > Scalar(0)) || !(gamma < Scalar(1)))
    throw std::invalid_argument("gamma must lie in (0, 1)");
  if (t < 1 || t > schedule.horizon) throw std::out_of_range("episode index outside [1, T]");
  const double numerator =
      std::log(2.0 * static_cast<double>(schedule.horizon) / static_cast<double>(gamma));
  const double denominator =
      2.0 * static_cast<double>(schedule.b) * static_cast<double>(schedule.bound) *
      static_cast<double>(schedule.bound) *
      std::pow(static_cast<double>(schedule.horizon - t + 1), static_cast<double>(schedule.a));
  return static_cast<Scalar>(std::sqrt(numerator / denominator));
}

// Radius for an explicitly given per-episode sample count.
template <typename Scalar>
Scalar dkw_radius_for_count(long n, long horizon, Scalar gamma) {
  if (!(gamma > Scalar(0)) || !(gamma < Scalar(1)))
    throw std::invalid_argument("gamma must lie in (0, 1)");
  if (n < 1) throw std::invalid_argument("sample count must be positive");
  const double numerator = std::log(2.0 * static_cast<double>(horizon) / static_cast<double>(gamma));
  return static_cast<Scalar>(std::sqrt(numerator / (2.0 * static_cast<double>(n))));
}

// First 1-based episode whose value is within eps of the terminal value.
template <typename Scalar>
long episodes_to_within(const VectorX<Scalar>& series, Scalar eps) {
  if (series.size() == 0) throw std::invalid_argument("empty series");
  const Scalar terminal = series[series.size() - 1];
  for (Eigen::Index t = 0; t < series.size(); ++t) {
    if (std::abs(series[t] - terminal) <= eps) return static_cast<long>(t) + 1;
  }
  return static_cast<long>(series.size());
}

}  // namespace ravl
