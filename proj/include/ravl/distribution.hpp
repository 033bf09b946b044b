#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

namespace ravl {

template <typename Scalar>
using ArrayX = Eigen::Array<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

// Risk level alpha in (0, 1]: CVaR averages the worst alpha-fraction of costs.
template <typename Scalar>
struct RiskLevel {
  Scalar alpha;

  explicit RiskLevel(Scalar a) : alpha(a) {
    if (!(alpha > Scalar(0)) || !(alpha <= Scalar(1)))
      throw std::invalid_argument("risk level must lie in (0, 1]");
  }
};

// Equal-width binning of a bounded cost range [lo, hi].
template <typename Scalar>
struct CostSupport {
  Scalar lo;
  Scalar hi;
  Eigen::Index bins;

  CostSupport(Scalar lo_value, Scalar hi_value, Eigen::Index bin_count)
      : lo(lo_value), hi(hi_value), bins(bin_count) {
    if (!std::isfinite(static_cast<double>(lo)) || !std::isfinite(static_cast<double>(hi)))
      throw std::invalid_argument("cost support bounds must be finite");
    if (!(lo < hi)) throw std::invalid_argument("cost support requires lo < hi");
    if (bins < 1) throw std::invalid_argument("cost support requires at least one bin");
  }

  Scalar bin_width() const { return (hi - lo) / static_cast<Scalar>(bins); }

  // Bin k covers [lo + k*w, lo + (k+1)*w); its representative value is the midpoint.
  Scalar midpoint(Eigen::Index k) const {
    return lo + (static_cast<Scalar>(k) + Scalar(0.5)) * bin_width();
  }

  ArrayX<Scalar> midpoints() const {
    const Scalar half = bin_width() / Scalar(2);
    return ArrayX<Scalar>::LinSpaced(bins, lo + half, hi - half);
  }

  friend bool operator==(const CostSupport&, const CostSupport&) = default;
};

// Histogram distribution over a CostSupport. Weights are validated
// non-negative and renormalized to unit mass on construction, so every
// instance satisfies the distribution invariants by construction.
template <typename Scalar>
class DiscreteDistribution {
 public:
  DiscreteDistribution(CostSupport<Scalar> support, ArrayX<Scalar> weights)
      : support_(support), weights_(std::move(weights)) {
    if (weights_.size() != support_.bins)
      throw std::invalid_argument("weight vector size must match bin count");
    if (!weights_.isFinite().all() || (weights_ < Scalar(0)).any())
      throw std::invalid_argument("weights must be non-negative and finite");
    const Scalar total = weights_.sum();
    if (!(total > Scalar(0)))
      throw std::invalid_argument("weights must carry positive total mass");
    weights_ /= total;
  }

  const CostSupport<Scalar>& support() const { return support_; }
  const ArrayX<Scalar>& weights() const { return weights_; }

  // Mean of bin midpoints under the bin weights.
  Scalar mean() const { return (weights_ * support_.midpoints()).sum(); }

  // Cumulative weights at the upper edge of each bin.
  ArrayX<Scalar> cdf() const {
    ArrayX<Scalar> out(weights_.size());
    Scalar cum = Scalar(0);
    for (Eigen::Index k = 0; k < weights_.size(); ++k) {
      cum += weights_[k];
      out[k] = cum;
    }
    return out;
  }

 private:
  CostSupport<Scalar> support_;
  ArrayX<Scalar> weights_;
};

// Empirical distribution of `samples` over the given binning: bin k receives
// count/n. A sample on an interior edge belongs to the higher bin; a sample
// equal to hi belongs to the top bin. Samples outside [lo, hi] are clamped
// into the boundary bins and counted through *clamped.
template <typename Scalar>
DiscreteDistribution<Scalar> edf_from_samples(std::span<const Scalar> samples,
                                              const CostSupport<Scalar>& support,
                                              std::size_t* clamped = nullptr) {
  if (samples.empty()) throw std::invalid_argument("no samples");
  ArrayX<Scalar> weights = ArrayX<Scalar>::Zero(support.bins);
  const Scalar width = support.bin_width();
  std::size_t out_of_range = 0;
  for (const Scalar s : samples) {
    Eigen::Index k;
    if (s < support.lo) {
      k = 0;
      ++out_of_range;
    } else if (s > support.hi) {
      k = support.bins - 1;
      ++out_of_range;
    } else {
      k = static_cast<Eigen::Index>(std::floor((s - support.lo) / width));
      if (k >= support.bins) k = support.bins - 1;  // s == hi lands in the top bin
    }
    weights[k] += Scalar(1);
  }
  if (clamped != nullptr) *clamped += out_of_range;
  return DiscreteDistribution<Scalar>(support, std::move(weights));
}

// Momentum mixture beta*prev + (1-beta)*current, elementwise over weights.
template <typename Scalar>
DiscreteDistribution<Scalar> momentum_mix(const DiscreteDistribution<Scalar>& prev,
                                          const DiscreteDistribution<Scalar>& current,
                                          Scalar beta) {
  if (!(beta >= Scalar(0)) || !(beta < Scalar(1)))
    throw std::invalid_argument("momentum beta must lie in [0, 1)");
  if (!(prev.support() == current.support()))
    throw std::invalid_argument("momentum_mix requires matching cost supports");
  ArrayX<Scalar> mixed = beta * prev.weights() + (Scalar(1) - beta) * current.weights();
  return DiscreteDistribution<Scalar>(current.support(), std::move(mixed));
}

// CVaR of a binned distribution: the VaR bin is the smallest index whose CDF
// reaches 1 - alpha, and its mass is split so exactly alpha mass is averaged.
// This makes the value exact for the binned law rather than bin-granular.
template <typename Scalar>
Scalar cvar(const DiscreteDistribution<Scalar>& dist, RiskLevel<Scalar> level) {
  const Scalar alpha = level.alpha;
  const ArrayX<Scalar>& weights = dist.weights();
  const Scalar target = Scalar(1) - alpha;  // CDF level at the VaR bin

  Eigen::Index var_bin = weights.size() - 1;
  Scalar cum = Scalar(0);
  for (Eigen::Index k = 0; k < weights.size(); ++k) {
    cum += weights[k];
    if (cum >= target) {
      var_bin = k;
      break;
    }
  }
  Scalar acc = (cum - target) * dist.support().midpoint(var_bin);
  for (Eigen::Index j = var_bin + 1; j < weights.size(); ++j)
    acc += weights[j] * dist.support().midpoint(j);
  return acc / alpha;
}

// sup_y |F(y) - G(y)| evaluated across the shared bin edges.
template <typename Scalar>
Scalar kolmogorov_distance(const DiscreteDistribution<Scalar>& f,
                           const DiscreteDistribution<Scalar>& g) {
  if (!(f.support() == g.support()))
    throw std::invalid_argument("kolmogorov_distance requires matching cost supports");
  Scalar cum_f = Scalar(0);
  Scalar cum_g = Scalar(0);
  Scalar worst = Scalar(0);
  for (Eigen::Index k = 0; k < f.weights().size(); ++k) {
    cum_f += f.weights()[k];
    cum_g += g.weights()[k];
    worst = std::max(worst, std::abs(cum_f - cum_g));
  }
  return worst;
}

// Exact CVaR of a finite weighted sample set, computed by sorting. Serves as
// the un-binned reference for the histogram CVaR path.
template <typename Scalar>
Scalar cvar_exact_oracle(std::span<const std::pair<Scalar, Scalar>> weighted_samples,
                         RiskLevel<Scalar> level) {
  if (weighted_samples.empty()) throw std::invalid_argument("no samples");
  Scalar total = Scalar(0);
  for (const auto& [value, weight] : weighted_samples) {
    if (!(weight >= Scalar(0))) throw std::invalid_argument("weights must be non-negative");
    if (!std::isfinite(static_cast<double>(value)))
      throw std::invalid_argument("sample values must be finite");
    total += weight;
  }
  if (std::abs(static_cast<double>(total) - 1.0) > 1e-9)
    throw std::invalid_argument("weights must sum to one");

  std::vector<std::pair<Scalar, Scalar>> sorted(weighted_samples.begin(), weighted_samples.end());
  std::sort(sorted.begin(), sorted.end(),
            [](const auto& a, const auto& b) { return a.first > b.first; });

  const Scalar alpha = level.alpha;
  Scalar remaining = alpha;
  Scalar acc = Scalar(0);
  for (const auto& [value, weight] : sorted) {
    const Scalar take = std::min(remaining, weight / total);
    acc += take * value;
    remaining -= take;
    if (!(remaining > Scalar(0))) break;
  }
  return acc / alpha;
}

}  // namespace ravl
