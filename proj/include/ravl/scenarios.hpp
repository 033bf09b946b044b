#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <stdexcept>
#include <string_view>
#include <utility>
#include <vector>

#include "ravl/game.hpp"

namespace ravl {

// Cournot duopoly: each producer picks a level x_i in [0, 1] and receives
//   J_i = 1 - (2 - x_1 - x_2) x_i + 0.2 x_i + xi_i x_i,  xi_i ~ U(0, 1),
// with xi_i drawn independently per agent per sample.
template <typename Scalar>
VectorX<Scalar> cournot_cost(const ActionProfile<Scalar>& x, const VectorX<Scalar>& xi) {
  if (x.num_agents() != 2 || x.actions[0].size() != 1 || x.actions[1].size() != 1)
    throw std::invalid_argument("cournot_cost expects two scalar agents");
  if (xi.size() != 2) throw std::invalid_argument("cournot_cost expects two noise draws");
  constexpr double kTol = 1e-9;
  for (int i = 0; i < 2; ++i) {
    const double v = static_cast<double>(x.actions[i][0]);
    if (v < -kTol || v > 1.0 + kTol)
      throw std::invalid_argument("cournot_cost requires x in [0, 1]^2");
    const double n = static_cast<double>(xi[i]);
    if (n < -kTol || n > 1.0 + kTol)
      throw std::invalid_argument("cournot_cost requires xi in [0, 1]^2");
  }
  const Scalar total = x.actions[0][0] + x.actions[1][0];
  VectorX<Scalar> costs(2);
  for (int i = 0; i < 2; ++i) {
    const Scalar xi_level = x.actions[i][0];
    costs[i] = Scalar(1) - (Scalar(2) - total) * xi_level + Scalar(0.2) * xi_level +
               xi[i] * xi_level;
  }
  return costs;
}

// Closed-form CVaR of the Cournot cost: J_i is affine and increasing in xi_i
// for x_i >= 0, and E[xi | xi >= 1 - alpha] = 1 - alpha/2 for xi ~ U(0, 1).
template <typename Scalar>
VectorX<Scalar> cournot_true_cvar(const ActionProfile<Scalar>& x, RiskLevel<Scalar> alpha) {
  if (x.num_agents() != 2 || x.actions[0].size() != 1 || x.actions[1].size() != 1)
    throw std::invalid_argument("cournot_true_cvar expects two scalar agents");
  const Scalar total = x.actions[0][0] + x.actions[1][0];
  VectorX<Scalar> out(2);
  for (int i = 0; i < 2; ++i) {
    const Scalar xi_level = x.actions[i][0];
    out[i] = Scalar(1) - (Scalar(2) - total) * xi_level + Scalar(0.2) * xi_level +
             (Scalar(1) - alpha.alpha / Scalar(2)) * xi_level;
  }
  return out;
}

// Symmetric stationary point of the closed-form CVaR costs: the first-order
// condition at x_1 = x_2 = x* reads 3 x* = 0.8 + alpha/2.
template <typename Scalar>
Scalar cournot_equilibrium(RiskLevel<Scalar> alpha) {
  return (Scalar(0.8) + alpha.alpha / Scalar(2)) / Scalar(3);
}

template <typename Scalar>
class CournotGame final : public GameOracle<Scalar> {
 public:
  CournotGame()
      : set_(ArrayX<Scalar>::Zero(1), ArrayX<Scalar>::Ones(1)) {}

  std::string_view name() const override { return "cournot"; }
  int num_agents() const override { return 2; }
  const BoxActionSet<Scalar>& action_set(int) const override { return set_; }

  // |J_i| <= 2.2 on [0,1]^2 with xi in [0,1]; 2.5 is declared with headroom
  // and the support covers every reachable cost.
  Scalar cost_bound() const override { return Scalar(2.5); }
  CostSupport<Scalar> cost_support(Eigen::Index bins) const override {
    return CostSupport<Scalar>(Scalar(-0.5), Scalar(2.5), bins);
  }

  VectorX<Scalar> draw_costs(const ActionProfile<Scalar>& x, Rng& rng) const override {
    VectorX<Scalar> xi(2);
    xi[0] = static_cast<Scalar>(rng.uniform01());
    xi[1] = static_cast<Scalar>(rng.uniform01());
    return cournot_cost(x, xi);
  }

  bool has_analytic_cvar() const override { return true; }

  VectorX<Scalar> analytic_cvar(const ActionProfile<Scalar>& x,
                                std::span<const RiskLevel<Scalar>> alphas) const override {
    if (alphas.size() != 2) throw std::invalid_argument("expected one risk level per agent");
    const Scalar total = x.actions[0][0] + x.actions[1][0];
    VectorX<Scalar> out(2);
    for (int i = 0; i < 2; ++i) {
      const Scalar xi_level = x.actions[i][0];
      out[i] = Scalar(1) - (Scalar(2) - total) * xi_level + Scalar(0.2) * xi_level +
               (Scalar(1) - alphas[i].alpha / Scalar(2)) * xi_level;
    }
    return out;
  }

  Scalar analytic_cvar_agent(int agent, const ActionProfile<Scalar>& x,
                             RiskLevel<Scalar> alpha) const override {
    const Scalar total = x.actions[0][0] + x.actions[1][0];
    const Scalar xi_level = x.actions[agent][0];
    return Scalar(1) - (Scalar(2) - total) * xi_level + Scalar(0.2) * xi_level +
           (Scalar(1) - alpha.alpha / Scalar(2)) * xi_level;
  }

 private:
  BoxActionSet<Scalar> set_;
};

// Deterministic calibration game with a known gradient:
//   C_i(x) = ||x_i - c_i||^2 + coupling * (sum_j 1^T x_j)^2.
// Zero noise, so CVaR at any level equals the cost itself.
template <typename Scalar>
class QuadraticTestGame final : public GameOracle<Scalar> {
 public:
  QuadraticTestGame(std::vector<VectorX<Scalar>> centers, Scalar coupling,
                    BoxActionSet<Scalar> box)
      : centers_(std::move(centers)), coupling_(coupling), set_(std::move(box)) {
    if (centers_.empty()) throw std::invalid_argument("need at least one agent");
    for (const auto& c : centers_) {
      if (c.size() != set_.dim())
        throw std::invalid_argument("center dimension does not match the action set");
    }
    if (!(coupling_ >= Scalar(0))) throw std::invalid_argument("coupling must be non-negative");
    bound_ = computed_bound();
  }

  std::string_view name() const override { return "quadratic"; }
  int num_agents() const override { return static_cast<int>(centers_.size()); }
  const BoxActionSet<Scalar>& action_set(int) const override { return set_; }
  Scalar cost_bound() const override { return bound_; }

  // Costs are non-negative, so the binning spans [0, U] for full resolution.
  CostSupport<Scalar> cost_support(Eigen::Index bins) const override {
    return CostSupport<Scalar>(Scalar(0), bound_, bins);
  }

  VectorX<Scalar> draw_costs(const ActionProfile<Scalar>& x, Rng&) const override {
    return evaluate(x);
  }

  bool has_analytic_cvar() const override { return true; }

  VectorX<Scalar> analytic_cvar(const ActionProfile<Scalar>& x,
                                std::span<const RiskLevel<Scalar>> alphas) const override {
    if (static_cast<int>(alphas.size()) != num_agents())
      throw std::invalid_argument("expected one risk level per agent");
    return evaluate(x);
  }

  Scalar analytic_cvar_agent(int agent, const ActionProfile<Scalar>& x,
                             RiskLevel<Scalar>) const override {
    return cost_for(agent, x);
  }

  // Exact gradient of C_i with respect to x_i.
  VectorX<Scalar> analytic_gradient(int agent, const ActionProfile<Scalar>& x) const {
    Scalar total = Scalar(0);
    for (const auto& xi : x.actions) total += xi.sum();
    return Scalar(2) * (x.actions[agent] - centers_[agent]) +
           VectorX<Scalar>::Constant(set_.dim(), Scalar(2) * coupling_ * total);
  }

 private:
  VectorX<Scalar> evaluate(const ActionProfile<Scalar>& x) const {
    VectorX<Scalar> out(num_agents());
    for (int i = 0; i < num_agents(); ++i) out[i] = cost_for(i, x);
    return out;
  }

  Scalar cost_for(int agent, const ActionProfile<Scalar>& x) const {
    Scalar total = Scalar(0);
    for (const auto& xi : x.actions) total += xi.sum();
    return (x.actions[agent] - centers_[agent]).squaredNorm() + coupling_ * total * total;
  }

  Scalar computed_bound() const {
    Scalar max_quad = Scalar(0);
    for (const auto& c : centers_) {
      Scalar q = Scalar(0);
      for (Eigen::Index k = 0; k < set_.dim(); ++k) {
        const Scalar reach = std::max(std::abs(set_.hi[k] - c[k]), std::abs(c[k] - set_.lo[k]));
        q += reach * reach;
      }
      max_quad = std::max(max_quad, q);
    }
    const Scalar n = static_cast<Scalar>(num_agents());
    const Scalar sum_extreme =
        std::max(std::abs(n * set_.lo.sum()), std::abs(n * set_.hi.sum()));
    return max_quad + coupling_ * sum_extreme * sum_extreme;
  }

  std::vector<VectorX<Scalar>> centers_;
  Scalar coupling_;
  BoxActionSet<Scalar> set_;
  Scalar bound_;
};

}  // namespace ravl
