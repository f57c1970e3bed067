#pragma once

#include <optional>
#include <span>

#include "genpop/frame.hpp"
#include "genpop/propensity.hpp"
#include "genpop/subpopulation.hpp"

namespace genpop {

inline constexpr double kCrumpFallbackAlpha = 0.1;

struct CrumpCutoff {
  double alpha = kCrumpFallbackAlpha;
  bool solved = false;  // false: the fixed [0.1, 0.9] approximation was used
};

// Smallest alpha in (0, 0.5] with 1/(a(1-a)) = 2 E[1/(e(1-e)) | a <= e <= 1-a].
CrumpCutoff crump_alpha(std::span<const double> population_scores);

// Keeps population units with score in [alpha, 1 - alpha].
Subpopulation trim_crump(const UnitFrame& frame, const PropensityFit& fit,
                         std::optional<double> alpha_override = std::nullopt);

// Keeps population units with score inside the sample's score range.
Subpopulation trim_minmax(const UnitFrame& frame, const PropensityFit& fit);

// Drops population units whose score exceeds the q-th sample percentile, q in [50, 99].
Subpopulation trim_quantile(const UnitFrame& frame, const PropensityFit& fit, double q);

// Drops population units outside the sample's range on any continuous covariate,
// or off the single level a binary covariate shows in the sample.
Subpopulation trim_covariates(const UnitFrame& frame);

}  // namespace genpop
