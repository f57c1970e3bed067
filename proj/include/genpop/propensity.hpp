#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "genpop/frame.hpp"

namespace genpop {

inline constexpr double kScoreFloor = 1e-6;
inline constexpr double kScoreCeiling = 1.0 - 1e-6;

struct PropensityOptions {
  double tolerance = 1e-8;        // max |coefficient change| at convergence
  int max_iterations = 100;
  double separation_bound = 15;   // |standardized coefficient| that signals separation
  double ridge_start = 1e-4;
  double ridge_max = 1e-1;
  bool pairwise_interactions = false;  // products of standardized continuous covariates
};

struct Standardization {
  double mean = 0;
  double sd = 1;
};

// Main-effects logistic selection model on standardized continuous covariates.
struct LogisticModel {
  std::vector<CovariateKind> kinds;
  std::vector<Standardization> standardization;  // identity for binary columns
  std::vector<bool> active;                       // false for dropped constant columns
  std::vector<std::pair<std::size_t, std::size_t>> interactions;
  Eigen::VectorXd coefficients;                   // intercept, main effects, interactions
  bool intercept_only = false;
  double intercept_only_rate = 0;                 // exact sample fraction when intercept_only

  bool converged = false;
  int iterations = 0;
  double deviance = 0;
  std::vector<double> objective_trace;  // penalized deviance per accepted iterate
  double ridge_lambda = 0;              // 0 unless the separation fallback engaged
  std::vector<std::string> warnings;

  double linear_predictor(std::span<const double> covariates) const;
  // Clipped to [kScoreFloor, kScoreCeiling].
  double score(std::span<const double> covariates) const;
  // Coefficients mapped back to the raw covariate scale (main-effects models only;
  // empty when interactions are present).
  Eigen::VectorXd original_scale_coefficients() const;
};

// Logistic regression of `selected` (1 = in sample) on the rows of `x` by IRLS
// with step halving, falling back to a ridge penalty on separation.
LogisticModel fit_logistic(const Eigen::MatrixXd& x, const Eigen::VectorXd& selected,
                           const std::vector<CovariateKind>& kinds,
                           const PropensityOptions& options = {});

struct PropensityFit {
  LogisticModel model;
  std::vector<std::string> covariate_names;
  std::vector<std::string> ids;  // frame row order
  std::vector<double> scores;    // aligned with ids

  // Hand-specified scores (no fitted model); used for known-score analyses.
  static PropensityFit from_scores(const UnitFrame& frame, std::vector<double> scores);
  double score_of_row(std::size_t row) const { return scores[row]; }
};

PropensityFit fit_propensity(const UnitFrame& frame, const PropensityOptions& options = {});

// Throws Error on a length mismatch.
double score(const PropensityFit& fit, std::span<const double> covariates);

void to_json(nlohmann::json& j, const PropensityFit& fit);

}  // namespace genpop
