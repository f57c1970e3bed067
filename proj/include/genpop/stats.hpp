#pragma once

#include <cmath>
#include <span>
#include <vector>

namespace genpop::stats {

double mean(std::span<const double> x);

// Sample variance (n - 1 denominator); 0 for fewer than two values.
double variance(std::span<const double> x);
double sd(std::span<const double> x);

// Quantile by linear interpolation between order statistics
// (position p * (n - 1) in the sorted data). p in [0, 1].
double quantile(std::span<const double> x, double p);
double quantile_sorted(std::span<const double> sorted, double p);

inline double inv_logit(double eta) {
  // Stable in both tails.
  if (eta >= 0) {
    double e = std::exp(-eta);
    return 1.0 / (1.0 + e);
  }
  double e = std::exp(eta);
  return e / (1.0 + e);
}

}  // namespace genpop::stats
