#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <utility>
#include <vector>

#include "ravl/distribution.hpp"
#include "ravl/rng.hpp"

using ravl::ArrayX;
using ravl::CostSupport;
using ravl::DiscreteDistribution;
using ravl::Rng;
using ravl::RiskLevel;

namespace {

DiscreteDistribution<double> make_dist(const CostSupport<double>& support,
                                       std::initializer_list<double> weights) {
  ArrayX<double> w(static_cast<Eigen::Index>(weights.size()));
  Eigen::Index k = 0;
  for (const double value : weights) w[k++] = value;
  return DiscreteDistribution<double>(support, std::move(w));
}

DiscreteDistribution<double> random_dist(const CostSupport<double>& support, Rng& rng) {
  ArrayX<double> w(support.bins);
  for (Eigen::Index k = 0; k < support.bins; ++k)
    w[k] = rng.uniform01() < 0.3 ? 0.0 : rng.uniform01();
  if (w.sum() <= 0.0) w[0] = 1.0;
  return DiscreteDistribution<double>(support, std::move(w));
}

// Independent route: CVaR of the binned law as a weighted sample set.
double cvar_via_oracle(const DiscreteDistribution<double>& dist, RiskLevel<double> level) {
  std::vector<std::pair<double, double>> weighted;
  for (Eigen::Index k = 0; k < dist.support().bins; ++k)
    weighted.emplace_back(dist.support().midpoint(k), dist.weights()[k]);
  return ravl::cvar_exact_oracle<double>(weighted, level);
}

}  // namespace

TEST_CASE("edf assigns an edge sample to the higher bin") {
  const CostSupport<double> support(0.0, 1.0, 2);
  const std::vector<double> samples{0.5};
  const auto dist = ravl::edf_from_samples<double>(samples, support);
  CHECK(dist.weights()[0] == doctest::Approx(0.0));
  CHECK(dist.weights()[1] == doctest::Approx(1.0));
}

TEST_CASE("edf splits symmetric samples evenly") {
  const CostSupport<double> support(0.0, 1.0, 2);
  const std::vector<double> samples{0.1, 0.1, 0.9, 0.9};
  const auto dist = ravl::edf_from_samples<double>(samples, support);
  CHECK(dist.weights()[0] == doctest::Approx(0.5));
  CHECK(dist.weights()[1] == doctest::Approx(0.5));
}

TEST_CASE("edf of uniform draws is close to the uniform law") {
  const CostSupport<double> support(0.0, 1.0, 10);
  Rng rng(7);
  std::vector<double> samples(10000);
  for (double& s : samples) s = rng.uniform01();
  const auto dist = ravl::edf_from_samples<double>(samples, support);
  for (Eigen::Index k = 0; k < 10; ++k) CHECK(std::abs(dist.weights()[k] - 0.1) < 0.02);
}

TEST_CASE("edf handles boundary and out-of-range samples") {
  const CostSupport<double> support(0.0, 1.0, 4);
  std::size_t clamped = 0;
  const std::vector<double> samples{-2.0, 0.0, 1.0, 3.5};
  const auto dist = ravl::edf_from_samples<double>(samples, support, &clamped);
  CHECK(clamped == 2);
  CHECK(dist.weights()[0] == doctest::Approx(0.5));   // -2 clamped + exact lo
  CHECK(dist.weights()[3] == doctest::Approx(0.5));   // hi lands in top bin + 3.5 clamped
}

TEST_CASE("edf rejects an empty sample list") {
  const CostSupport<double> support(0.0, 1.0, 2);
  const std::vector<double> samples;
  CHECK_THROWS_WITH_AS(ravl::edf_from_samples<double>(samples, support), "no samples",
                       std::invalid_argument);
}

TEST_CASE("momentum_mix with beta zero returns the current estimate") {
  const CostSupport<double> support(0.0, 1.0, 2);
  const auto prev = make_dist(support, {1.0, 0.0});
  const auto current = make_dist(support, {0.3, 0.7});
  const auto mixed = ravl::momentum_mix(prev, current, 0.0);
  CHECK(mixed.weights()[0] == current.weights()[0]);
  CHECK(mixed.weights()[1] == current.weights()[1]);
}

TEST_CASE("momentum_mix blends weights elementwise") {
  const CostSupport<double> support(0.0, 1.0, 2);
  CHECK(ravl::momentum_mix(make_dist(support, {1.0, 0.0}), make_dist(support, {0.0, 1.0}), 0.5)
            .weights()[0] == doctest::Approx(0.5));
  const auto mixed =
      ravl::momentum_mix(make_dist(support, {0.2, 0.8}), make_dist(support, {0.6, 0.4}), 0.25);
  CHECK(mixed.weights()[0] == doctest::Approx(0.5));
  CHECK(mixed.weights()[1] == doctest::Approx(0.5));
}

TEST_CASE("momentum_mix validates beta and supports") {
  const CostSupport<double> support(0.0, 1.0, 2);
  const CostSupport<double> other(0.0, 2.0, 2);
  const auto a = make_dist(support, {1.0, 0.0});
  const auto b = make_dist(other, {1.0, 0.0});
  CHECK_THROWS_AS(ravl::momentum_mix(a, a, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(ravl::momentum_mix(a, a, -0.1), std::invalid_argument);
  CHECK_THROWS_AS(ravl::momentum_mix(a, b, 0.5), std::invalid_argument);
}

TEST_CASE("momentum_mix always yields a valid distribution") {
  const CostSupport<double> support(-2.0, 2.0, 25);
  Rng rng(11);
  for (int it = 0; it < 200; ++it) {
    const auto mixed =
        ravl::momentum_mix(random_dist(support, rng), random_dist(support, rng), rng.uniform01());
    CHECK(mixed.weights().sum() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK((mixed.weights() >= 0.0).all());
  }
}

TEST_CASE("cvar on uniform midpoints") {
  const CostSupport<double> support(0.5, 4.5, 4);  // midpoints 1, 2, 3, 4
  const auto dist = make_dist(support, {0.25, 0.25, 0.25, 0.25});
  CHECK(ravl::cvar(dist, RiskLevel<double>(1.0)) == doctest::Approx(2.5).epsilon(1e-12));
  CHECK(ravl::cvar(dist, RiskLevel<double>(0.5)) == doctest::Approx(3.5).epsilon(1e-12));
  CHECK(cvar_via_oracle(dist, RiskLevel<double>(0.5)) == doctest::Approx(3.5).epsilon(1e-12));
}

TEST_CASE("cvar of a point mass is the bin midpoint at any level") {
  const CostSupport<double> support(-1.0, 1.0, 8);
  const auto dist = make_dist(support, {0, 0, 0, 0, 0, 1.0, 0, 0});
  for (const double alpha : {0.05, 0.3, 0.9, 1.0}) {
    CHECK(ravl::cvar(dist, RiskLevel<double>(alpha)) ==
          doctest::Approx(support.midpoint(5)).epsilon(1e-12));
  }
}

TEST_CASE("cvar at alpha one equals the weighted midpoint mean") {
  const CostSupport<double> support(-2.5, 2.5, 40);
  Rng rng(23);
  for (int it = 0; it < 300; ++it) {
    const auto dist = random_dist(support, rng);
    CHECK(std::abs(ravl::cvar(dist, RiskLevel<double>(1.0)) - dist.mean()) <= 1e-12);
  }
}

TEST_CASE("cvar is monotone non-increasing in alpha") {
  const CostSupport<double> support(-2.5, 2.5, 40);
  Rng rng(29);
  const std::vector<double> levels{0.05, 0.1, 0.25, 0.5, 0.75, 0.9, 1.0};
  for (int it = 0; it < 300; ++it) {
    const auto dist = random_dist(support, rng);
    double prev = ravl::cvar(dist, RiskLevel<double>(levels.front()));
    for (std::size_t j = 1; j < levels.size(); ++j) {
      const double next = ravl::cvar(dist, RiskLevel<double>(levels[j]));
      CHECK(prev >= next - 1e-12);
      prev = next;
    }
  }
}

TEST_CASE("kolmogorov distance examples") {
  const CostSupport<double> support(0.0, 1.0, 2);
  const auto f = make_dist(support, {0.5, 0.5});
  CHECK(ravl::kolmogorov_distance(f, f) == doctest::Approx(0.0));
  CHECK(ravl::kolmogorov_distance(make_dist(support, {1.0, 0.0}),
                                  make_dist(support, {0.0, 1.0})) == doctest::Approx(1.0));
  CHECK(ravl::kolmogorov_distance(f, make_dist(support, {0.25, 0.75})) == doctest::Approx(0.25));
  const CostSupport<double> other(0.0, 2.0, 2);
  CHECK_THROWS_AS(ravl::kolmogorov_distance(f, make_dist(other, {0.5, 0.5})),
                  std::invalid_argument);
}

TEST_CASE("cvar bounded by kolmogorov distance (CDF distance bound)") {
  // The (U/alpha) constant is exact for value ranges of length U, such as
  // costs binned over [0, U]; a shifted copy covers negative values while
  // keeping |values| <= U.
  const double bound = 2.5;
  Rng rng(31);
  int checked = 0;
  for (const CostSupport<double> support :
       {CostSupport<double>(0.0, bound, 50), CostSupport<double>(-0.5, 2.0, 50)}) {
    for (int it = 0; it < 500; ++it) {
      const auto f = random_dist(support, rng);
      const auto g = random_dist(support, rng);
      const double ks = ravl::kolmogorov_distance(f, g);
      for (const double alpha : {0.05, 0.1, 0.5, 0.9, 1.0, rng.uniform(0.01, 1.0)}) {
        const RiskLevel<double> level(alpha);
        const double gap = std::abs(ravl::cvar(f, level) - ravl::cvar(g, level));
        CHECK(gap <= bound / alpha * ks + 1e-9);
        ++checked;
      }
    }
  }
  CHECK(checked >= 6000);
}

TEST_CASE("cvar_exact_oracle examples") {
  const RiskLevel<double> half(0.5);
  const std::vector<std::pair<double, double>> quarters{{1, 0.25}, {2, 0.25}, {3, 0.25}, {4, 0.25}};
  CHECK(ravl::cvar_exact_oracle<double>(quarters, half) == doctest::Approx(3.5).epsilon(1e-12));

  const std::vector<std::pair<double, double>> point{{-1.7, 1.0}};
  for (const double alpha : {0.05, 0.5, 1.0})
    CHECK(ravl::cvar_exact_oracle<double>(point, RiskLevel<double>(alpha)) ==
          doctest::Approx(-1.7).epsilon(1e-12));

  const std::vector<std::pair<double, double>> tail{{0.0, 0.9}, {10.0, 0.1}};
  CHECK(ravl::cvar_exact_oracle<double>(tail, RiskLevel<double>(0.1)) ==
        doctest::Approx(10.0).epsilon(1e-12));

  const std::vector<std::pair<double, double>> empty;
  CHECK_THROWS_AS(ravl::cvar_exact_oracle<double>(empty, half), std::invalid_argument);
  const std::vector<std::pair<double, double>> unnormalized{{1.0, 0.4}};
  CHECK_THROWS_AS(ravl::cvar_exact_oracle<double>(unnormalized, half), std::invalid_argument);
}

TEST_CASE("histogram cvar tracks the exact oracle within a bin width over alpha") {
  const CostSupport<double> support(-2.5, 2.5, 100);
  Rng rng(37);
  for (int it = 0; it < 400; ++it) {
    const int n = 1 + static_cast<int>(rng.uniform01() * 49);
    std::vector<double> samples(static_cast<std::size_t>(n));
    std::vector<std::pair<double, double>> weighted(static_cast<std::size_t>(n));
    for (int j = 0; j < n; ++j) {
      samples[static_cast<std::size_t>(j)] = rng.uniform(-2.5, 2.5);
      weighted[static_cast<std::size_t>(j)] = {samples[static_cast<std::size_t>(j)], 1.0 / n};
    }
    const auto dist = ravl::edf_from_samples<double>(samples, support);
    for (const double alpha : {0.05, 0.1, 0.5, 0.9, 1.0}) {
      const RiskLevel<double> level(alpha);
      const double gap =
          std::abs(ravl::cvar(dist, level) - ravl::cvar_exact_oracle<double>(weighted, level));
      CHECK(gap <= support.bin_width() / alpha + 1e-12);
    }
  }
}
