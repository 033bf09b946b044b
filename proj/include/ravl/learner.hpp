#pragma once

#include <charconv>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "ravl/distribution.hpp"
#include "ravl/game.hpp"
#include "ravl/rng.hpp"

namespace ravl {

// Decreasing per-episode sample budget n_t = ceil(b * U^2 * (T - t + 1)^a).
template <typename Scalar>
struct SamplingSchedule {
  Scalar a;
  Scalar b;
  Scalar bound;  // U
  long horizon;  // T

  SamplingSchedule(Scalar a_exp, Scalar b_coeff, Scalar cost_bound, long episodes)
      : a(a_exp), b(b_coeff), bound(cost_bound), horizon(episodes) {
    if (!(a > Scalar(0)) || !(a < Scalar(1)))
      throw std::invalid_argument("schedule exponent a must lie in (0, 1)");
    if (!(b > Scalar(0)) || !(b < Scalar(1)))
      throw std::invalid_argument("schedule coefficient b must lie in (0, 1)");
    if (!(bound > Scalar(0))) throw std::invalid_argument("cost bound must be positive");
    if (horizon < 1) throw std::invalid_argument("horizon must be at least one episode");
  }
};

template <typename Scalar>
long sample_count(long t, const SamplingSchedule<Scalar>& schedule) {
  if (t < 1 || t > schedule.horizon) throw std::out_of_range("episode index outside [1, T]");
  const double raw = static_cast<double>(schedule.b) *
                     static_cast<double>(schedule.bound) * static_cast<double>(schedule.bound) *
                     std::pow(static_cast<double>(schedule.horizon - t + 1),
                              static_cast<double>(schedule.a));
  return static_cast<long>(std::ceil(raw));
}

enum class VariantKind { kOnePoint, kSampleReuse, kResidualFeedback, kMomentum };

// Algorithm variant: how the distribution estimate is built and which
// gradient rule consumes it. residual_feedback is momentum with beta = 0.
struct Variant {
  VariantKind kind = VariantKind::kMomentum;
  double beta = 0.0;

  static Variant one_point() { return {VariantKind::kOnePoint, 0.0}; }
  static Variant sample_reuse() { return {VariantKind::kSampleReuse, 0.0}; }
  static Variant residual_feedback() { return {VariantKind::kResidualFeedback, 0.0}; }
  static Variant momentum(double beta) {
    if (!(beta >= 0.0) || !(beta < 1.0))
      throw std::invalid_argument("momentum beta must lie in [0, 1)");
    return {VariantKind::kMomentum, beta};
  }

  // Variants that difference consecutive CVaR estimates; the others feed the
  // plain one-point estimator.
  bool residual_family() const {
    return kind == VariantKind::kResidualFeedback || kind == VariantKind::kMomentum;
  }

  double mix_beta() const { return kind == VariantKind::kMomentum ? beta : 0.0; }

  std::string label() const {
    switch (kind) {
      case VariantKind::kOnePoint: return "one_point";
      case VariantKind::kSampleReuse: return "sample_reuse";
      case VariantKind::kResidualFeedback: return "residual_feedback";
      case VariantKind::kMomentum: {
        char buf[32];
        auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), beta);
        return "momentum(" + std::string(buf, end) + ")";
      }
    }
    return "unknown";
  }
};

// Per-agent state threaded through the episode loop. Owned by exactly one
// trial; never shared.
template <typename Scalar>
struct LearnerState {
  VectorX<Scalar> x;  // mean action x_{i,t}, kept inside X_i^delta
  VectorX<Scalar> u;  // current unit perturbation direction u_{i,t}
  std::optional<DiscreteDistribution<Scalar>> dist_prev;  // running estimate (absent before t=2)
  std::optional<Scalar> cvar_prev;
  std::vector<Scalar> prev_samples;  // previous episode's raw costs (sample reuse only)
  RiskLevel<Scalar> alpha;
  Scalar eta;
  Scalar delta;
};

template <typename Scalar>
struct StepResult {
  VectorX<Scalar> gradient;
  Scalar cvar_estimate;
  std::size_t clamped;
};

// Uniform draw from the unit sphere S^{d-1}: normalized isotropic Gaussian.
template <typename Scalar>
VectorX<Scalar> sample_unit_sphere(Eigen::Index d, Rng& rng) {
  if (d < 1) throw std::invalid_argument("sphere dimension must be positive");
  VectorX<Scalar> u(d);
  Scalar norm = Scalar(0);
  do {
    for (Eigen::Index k = 0; k < d; ++k) u[k] = static_cast<Scalar>(rng.normal());
    norm = u.norm();
  } while (!(norm > Scalar(1e-12)));
  return u / norm;
}

// Residual-feedback gradient (d/delta) * (cvar_now - cvar_prev) * u.
template <typename Scalar>
VectorX<Scalar> gradient_estimate(Scalar cvar_now, Scalar cvar_prev, const VectorX<Scalar>& u,
                                  Eigen::Index d, Scalar delta) {
  if (!(delta > Scalar(0))) throw std::invalid_argument("delta must be positive");
  return (static_cast<Scalar>(d) / delta) * (cvar_now - cvar_prev) * u;
}

// One-point gradient (d/delta) * cvar_now * u.
template <typename Scalar>
VectorX<Scalar> one_point_gradient(Scalar cvar_now, const VectorX<Scalar>& u, Eigen::Index d,
                                   Scalar delta) {
  return gradient_estimate(cvar_now, Scalar(0), u, d, delta);
}

// One episode of the per-agent update: build the variant's distribution
// estimate from this episode's costs, estimate CVaR, form the gradient,
// project the descent step onto X_i^delta, and draw the next direction.
template <typename Scalar>
StepResult<Scalar> learner_step(LearnerState<Scalar>& state, std::span<const Scalar> samples,
                                const Variant& variant, const CostSupport<Scalar>& support,
                                const BoxActionSet<Scalar>& set, Rng& direction_rng) {
  std::size_t clamped = 0;
  DiscreteDistribution<Scalar> fresh = edf_from_samples(samples, support, &clamped);

  DiscreteDistribution<Scalar> estimate = [&]() -> DiscreteDistribution<Scalar> {
    switch (variant.kind) {
      case VariantKind::kOnePoint:
        return fresh;
      case VariantKind::kSampleReuse: {
        if (state.prev_samples.empty()) return fresh;
        std::vector<Scalar> pooled(state.prev_samples);
        pooled.insert(pooled.end(), samples.begin(), samples.end());
        // The fresh EDF above already counted this episode's clamps.
        return edf_from_samples(std::span<const Scalar>(pooled), support, nullptr);
      }
      case VariantKind::kResidualFeedback:
      case VariantKind::kMomentum:
        if (!state.dist_prev.has_value()) return fresh;  // F_bar_1 = F_hat_1
        return momentum_mix(*state.dist_prev, fresh, static_cast<Scalar>(variant.mix_beta()));
    }
    throw std::logic_error("unhandled variant kind");
  }();

  const Scalar cvar_now = cvar(estimate, state.alpha);
  const Eigen::Index d = state.x.size();

  VectorX<Scalar> grad;
  if (variant.residual_family()) {
    // Before two estimates exist the residual is defined as zero: x_2 = x_1.
    const Scalar prev = state.cvar_prev.value_or(cvar_now);
    grad = gradient_estimate(cvar_now, prev, state.u, d, state.delta);
  } else {
    grad = one_point_gradient(cvar_now, state.u, d, state.delta);
  }

  state.x = project_shrunk<Scalar>(state.x - state.eta * grad, set, state.delta);
  state.dist_prev = std::move(estimate);
  state.cvar_prev = cvar_now;
  if (variant.kind == VariantKind::kSampleReuse)
    state.prev_samples.assign(samples.begin(), samples.end());
  state.u = sample_unit_sphere<Scalar>(d, direction_rng);

  return StepResult<Scalar>{std::move(grad), cvar_now, clamped};
}

// Horizon-tuned (eta, delta, beta) with the no-regret scaling
//   eta = D/(d L0 N) T^(-3a/4), delta = D/N^(1/6) T^(-a/4), beta = 1/(U^2 T^(a/4)).
// L_0 is not observable from bandit feedback, so a user-supplied scale stands
// in for it; beta is clipped below one.
template <typename Scalar>
struct ScheduleOutput {
  Scalar eta;
  Scalar delta;
  Scalar beta;
  bool horizon_warning;  // set when T is below the schedule's validity threshold
};

template <typename Scalar>
ScheduleOutput<Scalar> horizon_schedule(long horizon, Scalar a, Scalar diameter, Scalar bound,
                                         int num_agents, Eigen::Index d,
                                         Scalar l0_scale = Scalar(1)) {
  if (horizon < 1) throw std::invalid_argument("horizon must be at least one episode");
  if (!(a > Scalar(0)) || !(a <= Scalar(1)))
    throw std::invalid_argument("schedule exponent a must lie in (0, 1]");
  if (!(diameter > Scalar(0))) throw std::invalid_argument("diameter must be positive");
  if (!(bound > Scalar(0))) throw std::invalid_argument("cost bound must be positive");
  if (num_agents < 1) throw std::invalid_argument("need at least one agent");
  if (d < 1) throw std::invalid_argument("dimension must be positive");
  if (!(l0_scale > Scalar(0))) throw std::invalid_argument("l0_scale must be positive");

  const double t_pow = static_cast<double>(horizon);
  const double n = static_cast<double>(num_agents);
  const double eta = static_cast<double>(diameter) /
                     (static_cast<double>(d) * static_cast<double>(l0_scale) * n) *
                     std::pow(t_pow, -0.75 * static_cast<double>(a));
  const double delta = static_cast<double>(diameter) / std::pow(n, 1.0 / 6.0) *
                       std::pow(t_pow, -0.25 * static_cast<double>(a));
  const double beta_raw =
      1.0 / (static_cast<double>(bound) * static_cast<double>(bound) *
             std::pow(t_pow, 0.25 * static_cast<double>(a)));
  const double beta = std::min(beta_raw, 1.0 - 1e-6);

  const double threshold = std::pow(8.0 * std::pow(n, 2.0 / 3.0), 1.0 / static_cast<double>(a));
  const bool warn = static_cast<double>(horizon) < std::ceil(threshold);

  return ScheduleOutput<Scalar>{static_cast<Scalar>(eta), static_cast<Scalar>(delta),
                                static_cast<Scalar>(beta), warn};
}

}  // namespace ravl
