#pragma once

#include <Eigen/Core>

#include <cmath>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "ravl/distribution.hpp"
#include "ravl/rng.hpp"

namespace ravl {

// Violation of a declared runtime contract (infeasible action, cost bound
// exceeded). The CLI maps this to a dedicated exit code.
struct ContractViolation : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Axis-aligned box action set [lo, hi] per dimension.
template <typename Scalar>
struct BoxActionSet {
  ArrayX<Scalar> lo;
  ArrayX<Scalar> hi;

  BoxActionSet(ArrayX<Scalar> lo_bounds, ArrayX<Scalar> hi_bounds)
      : lo(std::move(lo_bounds)), hi(std::move(hi_bounds)) {
    if (lo.size() != hi.size() || lo.size() == 0)
      throw std::invalid_argument("action set bounds must have matching positive dimension");
    if (!lo.isFinite().all() || !hi.isFinite().all())
      throw std::invalid_argument("action set bounds must be finite");
    if (!(lo < hi).all()) throw std::invalid_argument("action set requires lo < hi per dimension");
  }

  Eigen::Index dim() const { return lo.size(); }

  Scalar diameter() const { return (hi - lo).matrix().norm(); }

  Scalar min_side() const { return (hi - lo).minCoeff(); }

  bool contains(const VectorX<Scalar>& x, Scalar tol = Scalar(0)) const {
    if (x.size() != dim()) return false;
    return (x.array() >= lo - tol).all() && (x.array() <= hi + tol).all();
  }
};

// Joint action x = (x_1, ..., x_N), one vector per agent.
template <typename Scalar>
struct ActionProfile {
  std::vector<VectorX<Scalar>> actions;

  ActionProfile() = default;
  explicit ActionProfile(std::vector<VectorX<Scalar>> per_agent) : actions(std::move(per_agent)) {}

  int num_agents() const { return static_cast<int>(actions.size()); }
};

// Stochastic cost oracle of a repeated game. Implementations must be pure
// given (x, rng), so oracles are shareable across concurrent trials.
template <typename Scalar>
class GameOracle {
 public:
  virtual ~GameOracle() = default;

  virtual std::string_view name() const = 0;
  virtual int num_agents() const = 0;
  virtual const BoxActionSet<Scalar>& action_set(int agent) const = 0;

  // Declared bound U with |J_i(x, xi)| <= U for every feasible profile.
  virtual Scalar cost_bound() const = 0;

  // Scenario-declared binning of the reachable cost range.
  virtual CostSupport<Scalar> cost_support(Eigen::Index bins) const {
    const Scalar u = cost_bound();
    return CostSupport<Scalar>(-u, u, bins);
  }

  // One stochastic cost realization per agent for the joint action x.
  virtual VectorX<Scalar> draw_costs(const ActionProfile<Scalar>& x, Rng& rng) const = 0;

  virtual bool has_analytic_cvar() const { return false; }

  virtual VectorX<Scalar> analytic_cvar(const ActionProfile<Scalar>& /*x*/,
                                        std::span<const RiskLevel<Scalar>> /*alphas*/) const {
    throw std::logic_error(std::string(name()) + " exposes no closed-form CVaR");
  }

  // Scalar convenience used by evaluation loops; overridable for speed.
  virtual Scalar analytic_cvar_agent(int agent, const ActionProfile<Scalar>& x,
                                     RiskLevel<Scalar> alpha) const {
    std::vector<RiskLevel<Scalar>> alphas(static_cast<std::size_t>(num_agents()), alpha);
    return analytic_cvar(x, alphas)[agent];
  }
};

// Componentwise clamp onto the delta-shrunk box [lo + delta, hi - delta]:
// the Euclidean projection for axis-aligned boxes.
template <typename Scalar>
VectorX<Scalar> project_shrunk(const VectorX<Scalar>& x, const BoxActionSet<Scalar>& set,
                               Scalar delta) {
  if (!(delta >= Scalar(0))) throw std::invalid_argument("delta must be non-negative");
  if (!(delta < set.min_side() / Scalar(2)))
    throw std::invalid_argument("delta too large for action set");
  if (x.size() != set.dim())
    throw std::invalid_argument("action dimension does not match the action set");
  return x.array().max(set.lo + delta).min(set.hi - delta).matrix();
}

// The played action x + delta*u for a unit perturbation direction u.
template <typename Scalar>
VectorX<Scalar> perturb(const VectorX<Scalar>& x, const VectorX<Scalar>& u, Scalar delta) {
  if (x.size() != u.size()) throw std::invalid_argument("direction dimension mismatch");
  if (std::abs(static_cast<double>(u.norm()) - 1.0) > 1e-9)
    throw std::invalid_argument("perturbation direction must be a unit vector");
  return x + delta * u;
}

// Draws one cost vector while enforcing the game contracts: the profile must
// be feasible and every returned cost must respect the declared bound.
template <typename Scalar>
VectorX<Scalar> sample_costs(const GameOracle<Scalar>& game, const ActionProfile<Scalar>& x,
                             Rng& rng) {
  const int n = game.num_agents();
  if (x.num_agents() != n)
    throw ContractViolation("action profile has wrong number of agents");
  constexpr Scalar kFeasibilityTol = Scalar(1e-9);
  for (int i = 0; i < n; ++i) {
    const BoxActionSet<Scalar>& set = game.action_set(i);
    if (x.actions[i].size() != set.dim()) {
      std::ostringstream msg;
      msg << "infeasible action: agent " << i << " has dimension " << x.actions[i].size()
          << ", expected " << set.dim();
      throw ContractViolation(msg.str());
    }
    for (Eigen::Index k = 0; k < set.dim(); ++k) {
      const Scalar v = x.actions[i][k];
      if (!(v >= set.lo[k] - kFeasibilityTol) || !(v <= set.hi[k] + kFeasibilityTol)) {
        std::ostringstream msg;
        msg << "infeasible action: agent " << i << " dimension " << k << " value " << v
            << " outside [" << set.lo[k] << ", " << set.hi[k] << "]";
        throw ContractViolation(msg.str());
      }
    }
  }
  VectorX<Scalar> costs = game.draw_costs(x, rng);
  if (costs.size() != n) throw ContractViolation("game returned wrong number of costs");
  const Scalar bound = game.cost_bound();
  for (int i = 0; i < n; ++i) {
    if (!(std::abs(static_cast<double>(costs[i])) <= static_cast<double>(bound) + 1e-12)) {
      std::ostringstream msg;
      msg << "cost bound violated: agent " << i << " cost " << costs[i]
          << " exceeds declared bound " << bound;
      throw ContractViolation(msg.str());
    }
  }
  return costs;
}

}  // namespace ravl
