#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "genpop/frame.hpp"
#include "genpop/propensity.hpp"
#include "genpop/subpopulation.hpp"

namespace genpop {

// B-index below this is read as low generalizability.
inline constexpr double kLowGeneralizability = 0.50;
inline constexpr std::size_t kDensityGridPoints = 512;

// Silverman's rule, 0.9 * min(sd, IQR/1.34) * n^(-1/5), floored at one grid step.
// Throws Error for fewer than two distinct values.
double silverman_bandwidth(std::span<const double> x);

// Gaussian KDE evaluated on the 512-point grid over [0,1], renormalized to
// integrate to one on that interval (trapezoid rule).
struct DensityCurve {
  std::vector<double> grid;
  std::vector<double> density;
  double bandwidth = 0;
};
DensityCurve unit_interval_density(std::span<const double> x);
DensityCurve unit_interval_density(std::span<const double> x, double bandwidth);

double trapezoid(std::span<const double> grid, std::span<const double> f);

struct BIndex {
  double value = 0;
  double sample_bandwidth = 0;
  double population_bandwidth = 0;
};

// Bhattacharyya coefficient between the two score densities, clipped to [0,1].
BIndex b_index_detail(std::span<const double> sample_scores, std::span<const double> population_scores);
double b_index(std::span<const double> sample_scores, std::span<const double> population_scores);

// Fraction of population scores inside [min, max] of the sample scores.
double overlap(std::span<const double> sample_scores, std::span<const double> population_scores);

struct BalanceRow {
  std::string covariate;
  double smd = 0;
  bool degenerate = false;  // pooled sd was zero
};

// (sample mean - retained population mean) / sqrt((var_sample + var_population) / 2).
std::vector<BalanceRow> balance_table(const UnitFrame& frame, const Subpopulation& sub);

struct DiagnosticsReport {
  std::string subpopulation;
  std::size_t n0 = 0;
  double b_index = 0;
  double overlap = 0;
  std::vector<BalanceRow> balance;
  double sample_bandwidth = 0;
  double population_bandwidth = 0;
  bool point_masses = false;  // both score lists constant; B is 1 or 0
  bool low_generalizability() const { return b_index < kLowGeneralizability; }
};

// Diagnostics of a subpopulation using the scores of `fit` (sample units vs.
// retained population-only units).
DiagnosticsReport diagnose(const UnitFrame& frame, const Subpopulation& sub, const PropensityFit& fit);

void to_json(nlohmann::json& j, const DiagnosticsReport& r);

}  // namespace genpop
