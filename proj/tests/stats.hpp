#pragma once

#include <boost/math/distributions/chi_squared.hpp>

#include <cstddef>
#include <vector>

namespace s2pc::stats {

struct ChiSquare {
  double statistic = 0;
  double critical = 0;
  bool uniform() const { return statistic < critical; }
};

/// Pearson test of equal bucket probabilities at the given significance.
inline ChiSquare chi_square_uniform(const std::vector<std::size_t>& counts, double significance = 0.01) {
  std::size_t total = 0;
  for (auto c : counts) total += c;
  const double expected = static_cast<double>(total) / static_cast<double>(counts.size());
  ChiSquare r;
  for (auto c : counts) {
    const double d = static_cast<double>(c) - expected;
    r.statistic += d * d / expected;
  }
  boost::math::chi_squared dist(static_cast<double>(counts.size() - 1));
  r.critical = boost::math::quantile(boost::math::complement(dist, significance));
  return r;
}

}  // namespace s2pc::stats
