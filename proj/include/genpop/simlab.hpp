#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "genpop/bart.hpp"
#include "genpop/estimators.hpp"
#include "genpop/frame.hpp"
#include "genpop/propensity.hpp"
#include "genpop/subpopulation.hpp"

namespace genpop {

enum class EffectModel { constant, linear };

// Synthetic generalization scenario. Covariates are x1..xK (standard normal)
// followed by b1..bM (Bernoulli(binary_rate)). Coefficient vectors carry the
// intercept first; the selection intercept is recalibrated per population so
// that the expected sample size equals sample_size.
struct SimConfig {
  std::size_t population_size = 2000;
  std::size_t sample_size = 60;
  std::size_t covariate_count = 14;
  std::size_t binary_count = 4;
  double binary_rate = 0.5;
  std::vector<double> selection_coefficients;
  std::vector<double> outcome_coefficients;
  EffectModel effect_model = EffectModel::linear;
  double tau0 = 0.5;
  std::vector<double> effect_slopes;  // per covariate, linear effect model only
  double noise_sd = 1.0;
  int replications = 500;
  std::uint64_t seed = 20240601;
  bool allow_large_sample = false;

  std::vector<std::string> methods{"original", "crump", "minmax", "quantile:90", "covariates", "policy"};
  std::string policy = "b4=1";
  std::vector<EstimatorKind> estimators{std::begin(kAllEstimators), std::end(kAllEstimators)};
  int bootstrap_b = 0;  // 0: only BART reports an SE
  BartConfig bart;

  // The default scenario: N = 2000, n = 60, 10 continuous + 4 binary covariates.
  static SimConfig defaults();
  // Missing fields keep their defaults; errors name the JSON field path.
  static SimConfig from_json(const nlohmann::json& j);
  static SimConfig load(const std::filesystem::path& path);
  nlohmann::json to_json() const;
  void validate() const;

  std::size_t continuous_count() const { return covariate_count - binary_count; }
  CovariateSchema schema() const;
};

// All units population-only, outcome "Y" not yet revealed; potential outcomes attached.
UnitFrame generate_population(const SimConfig& config, std::uint64_t seed);

// Selects units with probability inv_logit(b0 + coef'x), b0 calibrated by
// bisection; randomizes the selected units 1:1 and reveals their outcome.
UnitFrame draw_sample(const UnitFrame& population, const SimConfig& config, std::uint64_t seed);

// Intercept with sum of selection probabilities equal to target.
double calibrate_selection_intercept(const Eigen::MatrixXd& x, const std::vector<double>& coefficients,
                                     double target);

// Mean of y1 - y0 over the retained population-only units.
double true_pate(const UnitFrame& frame, const Subpopulation& sub);

// Builds a redefinition by CLI/config method name:
// original | crump | minmax | quantile[:q] | covariates | policy:<spec>.
Subpopulation build_subpopulation(const std::string& method, const UnitFrame& frame, const PropensityFit& fit,
                                  double default_quantile = 90);

struct SimCell {
  EstimatorKind estimator = EstimatorKind::ipw;
  std::string method;
  int runs = 0;
  double mean_bias = 0;
  double empirical_se = 0;
  std::optional<double> mean_reported_se;
  std::optional<double> coverage;
  double mean_n0 = 0;
};

struct SimMethodSummary {
  std::string method;
  int runs = 0;
  double mean_n0 = 0;
  double mean_b_index = 0;
  double mean_overlap = 0;
  double mean_true_pate = 0;
};

struct SimEstimateRecord {
  EstimatorKind estimator;
  std::string method;
  double estimate = 0;
  double truth = 0;
  std::optional<double> se;
  std::optional<std::pair<double, double>> ci95;
};

struct SimReplication {
  int index = 0;
  std::uint64_t seed = 0;
  std::size_t sample_size = 0;
  std::map<std::string, std::size_t> n0;
  std::map<std::string, double> b_index;
  std::map<std::string, double> overlap;
  std::map<std::string, double> truth;
  std::vector<SimEstimateRecord> estimates;
  std::size_t eblup_strata_checked = 0;
  std::size_t eblup_convexity_violations = 0;
  std::vector<std::string> failures;

  const SimEstimateRecord* find(EstimatorKind k, const std::string& method) const;
};

struct SimResult {
  SimConfig config;
  std::vector<SimCell> cells;
  std::vector<SimMethodSummary> methods;
  std::vector<SimReplication> replications;
  std::map<std::string, int> failure_census;
  std::size_t eblup_strata_checked = 0;
  std::size_t eblup_convexity_violations = 0;

  const SimCell* cell(EstimatorKind k, const std::string& method) const;
  nlohmann::json to_json() const;
  // One row per estimator x method.
  std::string to_csv() const;
};

SimReplication run_replication(const SimConfig& config, int index);
SimResult run_study(const SimConfig& config);

}  // namespace genpop
