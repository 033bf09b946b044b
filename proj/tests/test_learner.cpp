#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "ravl/learner.hpp"
#include "ravl/scenarios.hpp"
#include "ravl/simulation.hpp"

using ravl::ActionProfile;
using ravl::AgentParams;
using ravl::ArrayX;
using ravl::BoxActionSet;
using ravl::CostSupport;
using ravl::Rng;
using ravl::RiskLevel;
using ravl::SamplingSchedule;
using ravl::SimulationSpec;
using ravl::Variant;
using ravl::VectorX;

namespace {

VectorX<double> vec(std::initializer_list<double> values) {
  VectorX<double> out(static_cast<Eigen::Index>(values.size()));
  Eigen::Index k = 0;
  for (const double v : values) out[k++] = v;
  return out;
}

// A ready-to-run spec with a flat n_t schedule; tests tweak fields in place.
SimulationSpec<double> make_spec(const ravl::GameOracle<double>& game, Variant variant, double eta,
                                 double delta, long horizon, long samples, double alpha = 0.9) {
  SimulationSpec<double> spec;
  spec.game = &game;
  spec.variant = variant;
  spec.label = variant.label();
  spec.horizon = horizon;
  spec.support = game.cost_support(200);
  spec.samples_per_episode.assign(static_cast<std::size_t>(horizon), samples);
  spec.dkw = ravl::VectorX<double>::Zero(horizon);
  for (int i = 0; i < game.num_agents(); ++i) {
    spec.params.push_back(AgentParams<double>{eta, delta});
    spec.alphas.emplace_back(alpha);
    spec.x0.push_back(game.action_set(i).hi.matrix());
  }
  return spec;
}

}  // namespace

TEST_CASE("sample_count evaluates the schedule formula") {
  const SamplingSchedule<double> schedule(0.5, 0.5, 2.0, 100);
  CHECK(ravl::sample_count(1, schedule) == 20);   // ceil(0.5 * 4 * sqrt(100))
  CHECK(ravl::sample_count(100, schedule) == 2);  // ceil(2 * 1)
  CHECK_THROWS_AS(ravl::sample_count(0, schedule), std::out_of_range);
  CHECK_THROWS_AS(ravl::sample_count(101, schedule), std::out_of_range);

  const SamplingSchedule<double> tiny(0.9, 0.1, 1.0, 5);
  CHECK(ravl::sample_count(5, tiny) == 1);  // ceiling keeps n_t >= 1

  long prev = ravl::sample_count(1, schedule);
  long total = prev;
  for (long t = 2; t <= 100; ++t) {
    const long n = ravl::sample_count(t, schedule);
    CHECK(n <= prev);
    prev = n;
    total += n;
  }
  CHECK(total > 0);
}

TEST_CASE("sample_unit_sphere draws unit vectors, signs in one dimension") {
  Rng rng(41);
  CHECK_THROWS_AS(ravl::sample_unit_sphere<double>(0, rng), std::invalid_argument);

  int positive = 0;
  const int draws = 10000;
  for (int it = 0; it < draws; ++it) {
    const auto u = ravl::sample_unit_sphere<double>(1, rng);
    CHECK(std::abs(std::abs(u[0]) - 1.0) <= 1e-9);
    if (u[0] > 0) ++positive;
  }
  CHECK(std::abs(static_cast<double>(positive) / draws - 0.5) < 0.03);

  VectorX<double> mean = VectorX<double>::Zero(3);
  const int iso_draws = 100000;
  for (int it = 0; it < iso_draws; ++it) {
    const auto u = ravl::sample_unit_sphere<double>(3, rng);
    CHECK(std::abs(u.norm() - 1.0) <= 1e-9);
    mean += u;
  }
  mean /= iso_draws;
  for (int k = 0; k < 3; ++k) CHECK(std::abs(mean[k]) < 0.01);
}

TEST_CASE("gradient estimators evaluate the zeroth-order formulas") {
  CHECK(ravl::gradient_estimate(0.7, 0.7, vec({1.0}), 1, 0.1).norm() == doctest::Approx(0.0));
  const auto g = ravl::gradient_estimate(0.35, 0.30, vec({1.0, 0.0}), 2, 0.1);
  CHECK(g[0] == doctest::Approx(1.0));
  CHECK(g[1] == doctest::Approx(0.0));
  CHECK_THROWS_AS(ravl::gradient_estimate(0.1, 0.0, vec({1.0}), 1, 0.0), std::invalid_argument);

  CHECK(ravl::one_point_gradient(0.0, vec({1.0}), 1, 0.5).norm() == doctest::Approx(0.0));
  CHECK(ravl::one_point_gradient(1.0, vec({1.0}), 1, 0.5)[0] == doctest::Approx(2.0));

  // Norm bound d * 2U / delta when |cvar| <= U.
  Rng rng(43);
  const double bound = 2.5;
  for (int it = 0; it < 300; ++it) {
    const auto u = ravl::sample_unit_sphere<double>(3, rng);
    const double now = rng.uniform(-bound, bound);
    const double prev = rng.uniform(-bound, bound);
    const double delta = rng.uniform(0.01, 0.3);
    CHECK(ravl::gradient_estimate(now, prev, u, 3, delta).norm() <=
          3 * 2 * bound / delta + 1e-9);
    CHECK(ravl::one_point_gradient(now, u, 3, delta).norm() <= 3 * bound / delta + 1e-9);
  }
}

TEST_CASE("one-point estimator is unbiased for the smoothed quadratic gradient") {
  const BoxActionSet<double> box(ArrayX<double>::Zero(1), ArrayX<double>::Ones(1));
  ravl::QuadraticTestGame<double> game({vec({0.3})}, 0.0, box);
  const double delta = 0.2;
  const VectorX<double> x = vec({0.6});
  Rng rng(47);
  VectorX<double> mean = VectorX<double>::Zero(1);
  const int draws = 50000;
  ActionProfile<double> profile;
  profile.actions = {x};
  for (int it = 0; it < draws; ++it) {
    const auto u = ravl::sample_unit_sphere<double>(1, rng);
    ActionProfile<double> played;
    played.actions = {x + delta * u};
    const double cost = game.analytic_cvar_agent(0, played, RiskLevel<double>(1.0));
    mean += ravl::one_point_gradient(cost, u, 1, delta);
  }
  mean /= draws;
  // The quadratic's smoothed gradient equals the plain gradient 2(x - c).
  CHECK(std::abs(mean[0] - 2.0 * (0.6 - 0.3)) < 0.05);
}

TEST_CASE("horizon schedule evaluates the closed forms") {
  const auto out = ravl::horizon_schedule<double>(10000, 1.0, 1.0, 1.0, 1, 1, 1.0);
  CHECK(out.eta == doctest::Approx(1e-3).epsilon(1e-12));
  CHECK(out.delta == doctest::Approx(0.1).epsilon(1e-12));
  CHECK(out.beta == doctest::Approx(0.1).epsilon(1e-12));
  CHECK(!out.horizon_warning);

  const auto halved = ravl::horizon_schedule<double>(10000, 1.0, 1.0, 1.0, 1, 1, 2.0);
  CHECK(halved.eta == doctest::Approx(out.eta / 2).epsilon(1e-12));
  CHECK(halved.delta == doctest::Approx(out.delta).epsilon(1e-12));
  CHECK(halved.beta == doctest::Approx(out.beta).epsilon(1e-12));

  // Threshold (8 N^(2/3))^(1/a) = 64 for N = 1, a = 0.5.
  CHECK(ravl::horizon_schedule<double>(50, 0.5, 1.0, 1.0, 1, 1).horizon_warning);
  CHECK(!ravl::horizon_schedule<double>(64, 0.5, 1.0, 1.0, 1, 1).horizon_warning);
}

TEST_CASE("momentum(0) and residual_feedback trajectories are bit-identical") {
  ravl::CournotGame<double> game;
  auto spec_a = make_spec(game, Variant::momentum(0.0), 0.004, 0.1, 60, 4);
  auto spec_b = make_spec(game, Variant::residual_feedback(), 0.004, 0.1, 60, 4);
  const auto trace_a = ravl::simulate_trial(spec_a, 0, 777);
  const auto trace_b = ravl::simulate_trial(spec_b, 0, 777);
  CHECK(trace_a.cvar_est == trace_b.cvar_est);
  CHECK(trace_a.grad_norm == trace_b.grad_norm);
  for (int i = 0; i < 2; ++i) {
    CHECK(trace_a.x[i] == trace_b.x[i]);
    CHECK(trace_a.xhat[i] == trace_b.xhat[i]);
  }
}

TEST_CASE("a zero step size freezes the learner") {
  ravl::CournotGame<double> game;
  auto spec = make_spec(game, Variant::momentum(0.5), 0.0, 0.1, 40, 3);
  for (auto& p : spec.params) p.eta = 0.0;
  const auto trace = ravl::simulate_trial(spec, 0, 101);
  for (int i = 0; i < 2; ++i) {
    for (long t = 0; t < trace.horizon; ++t)
      CHECK(trace.x[i](t, 0) == doctest::Approx(0.9));  // upper corner projected to hi - delta
  }
}

TEST_CASE("one-point learner approaches the quadratic minimizer") {
  const BoxActionSet<double> box(ArrayX<double>::Zero(1), ArrayX<double>::Ones(1));
  ravl::QuadraticTestGame<double> game({vec({0.3})}, 0.0, box);
  double total_error = 0.0;
  const int seeds = 5;
  for (int seed = 0; seed < seeds; ++seed) {
    auto spec = make_spec(game, Variant::one_point(), 0.02, 0.05, 2000, 1, 1.0);
    const auto trace = ravl::simulate_trial(spec, seed, 4242);
    total_error += std::abs(trace.x[0](trace.horizon - 1, 0) - 0.3);
  }
  CHECK(total_error / seeds < 0.05);
}

TEST_CASE("every variant keeps played actions feasible and gradients bounded") {
  ravl::CournotGame<double> game;
  const double bound = game.cost_bound();
  for (const Variant variant : {Variant::momentum(0.5), Variant::residual_feedback(),
                                Variant::sample_reuse(), Variant::one_point()}) {
    auto spec = make_spec(game, variant, 0.01, 0.08, 80, 3);
    const auto trace = ravl::simulate_trial(spec, 1, 31337);
    const double grad_cap =
        variant.residual_family() ? 2.0 * bound / 0.08 : bound / 0.08;  // d_i = 1
    for (long t = 0; t < trace.horizon; ++t) {
      for (int i = 0; i < 2; ++i) {
        CHECK(trace.xhat[i](t, 0) >= -1e-9);
        CHECK(trace.xhat[i](t, 0) <= 1.0 + 1e-9);
        CHECK(trace.x[i](t, 0) >= 0.08 - 1e-9);
        CHECK(trace.x[i](t, 0) <= 1.0 - 0.08 + 1e-9);
        CHECK(trace.grad_norm(t, i) <= grad_cap + 1e-9);
      }
    }
  }
}

TEST_CASE("identical seeds reproduce identical traces") {
  ravl::CournotGame<double> game;
  auto spec = make_spec(game, Variant::momentum(0.5), 0.006, 0.1, 50, 3);
  const auto a = ravl::simulate_trial(spec, 2, 555);
  const auto b = ravl::simulate_trial(spec, 2, 555);
  CHECK(a.cvar_est == b.cvar_est);
  CHECK(a.cvar_true == b.cvar_true);
  CHECK(a.x[0] == b.x[0]);
  CHECK(a.x[1] == b.x[1]);
  CHECK(a.total_cost_draws == b.total_cost_draws);
}

TEST_CASE("the first residual episode leaves the action unchanged") {
  ravl::CournotGame<double> game;
  auto spec = make_spec(game, Variant::momentum(0.5), 0.01, 0.1, 2, 5);
  const auto trace = ravl::simulate_trial(spec, 0, 2024);
  for (int i = 0; i < 2; ++i) {
    CHECK(trace.grad_norm(0, i) == doctest::Approx(0.0));
    CHECK(trace.x[i](1, 0) == doctest::Approx(trace.x[i](0, 0)));
  }
}
