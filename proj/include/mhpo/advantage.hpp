#ifndef MHPO_ADVANTAGE_HPP
#define MHPO_ADVANTAGE_HPP

#include <cmath>
#include <vector>

#include "mhpo/common.hpp"

namespace mhpo {

/// Scalar rewards of the K responses sampled for one prompt.
struct RewardGroup {
  std::vector<double> rewards;

  std::size_t group_size() const { return rewards.size(); }
};

struct AdvantageVector {
  std::vector<double> values;
  bool degenerate = false;  // all rewards equal; values forced to zero
};

/// Standardizes a reward group: (R_i - mean) / std with the population
/// (divide-by-K) standard deviation. A group whose std falls below
/// degeneracy_tol carries no ranking signal and maps to all-zero advantages,
/// which contributes exactly zero gradient.
inline AdvantageVector group_normalize(const RewardGroup& g,
                                       double degeneracy_tol = 1e-8) {
  const std::size_t k = g.rewards.size();
  if (k < 2) {
    throw ConfigError("group_normalize: group size must be at least 2");
  }
  require_positive(degeneracy_tol, "degeneracy_tol");

  double mean = 0.0;
  for (double r : g.rewards) {
    require_finite(r, "reward");
    mean += r;
  }
  mean /= static_cast<double>(k);

  double var = 0.0;
  for (double r : g.rewards) {
    const double d = r - mean;
    var += d * d;
  }
  var /= static_cast<double>(k);
  const double std_dev = std::sqrt(var);

  AdvantageVector out;
  out.values.resize(k, 0.0);
  if (std_dev < degeneracy_tol) {
    out.degenerate = true;
    return out;
  }
  for (std::size_t i = 0; i < k; ++i) {
    out.values[i] = (g.rewards[i] - mean) / std_dev;
  }
  return out;
}

}  // namespace mhpo

#endif  // MHPO_ADVANTAGE_HPP
