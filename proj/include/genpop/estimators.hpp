#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "genpop/bart.hpp"
#include "genpop/frame.hpp"
#include "genpop/propensity.hpp"
#include "genpop/subpopulation.hpp"

namespace genpop {

enum class EstimatorKind { ipw, outcome_model, tmle, eblup, bart };

inline constexpr EstimatorKind kAllEstimators[] = {EstimatorKind::ipw, EstimatorKind::bart,
                                                   EstimatorKind::outcome_model, EstimatorKind::tmle,
                                                   EstimatorKind::eblup};

std::string_view to_string(EstimatorKind k);
// Accepts ipw, outcome_model (or outcome), tmle, eblup, bart.
EstimatorKind parse_estimator(std::string_view name);

struct PateEstimate {
  EstimatorKind estimator = EstimatorKind::ipw;
  std::string outcome;
  double estimate = 0;
  std::optional<double> se;                         // absent when no bootstrap was requested
  std::optional<std::pair<double, double>> ci95;
  std::string subpopulation;
  std::size_t n0 = 0;
  std::uint64_t seed = 0;
  nlohmann::json diagnostics = nlohmann::json::object();
};

void to_json(nlohmann::json& j, const PateEstimate& e);

struct EstimateOptions {
  std::uint64_t seed = 0;
  int bootstrap_b = 1000;         // 0 skips the bootstrap; otherwise at least 50
  bool refit_propensity = true;   // false: use the supplied fit's scores as known
  PropensityOptions propensity;
  BartConfig bart;
};

// One subpopulation and one outcome, as matrices. Targets are the retained
// population-only units.
struct EstimationProblem {
  Eigen::MatrixXd sample_x;
  Eigen::VectorXd y;
  Eigen::VectorXd z;  // 1 treated, 0 control
  Eigen::MatrixXd target_x;
  std::vector<CovariateKind> kinds;
  // Filled only for known-score problems.
  Eigen::VectorXd known_sample_scores;
  Eigen::VectorXd known_target_scores;

  bool has_known_scores() const { return known_sample_scores.size() > 0; }
};

EstimationProblem make_problem(const UnitFrame& frame, const Subpopulation& sub, std::string_view outcome,
                               const PropensityFit* known_scores = nullptr);

struct SelectionScores {
  Eigen::VectorXd sample;
  Eigen::VectorXd target;
};

// Known scores, or a selection model re-fit on sample + targets.
SelectionScores selection_scores(const EstimationProblem& p, const PropensityOptions& options = {});

// --- point estimators -------------------------------------------------------

struct IpwPoint {
  double estimate = 0;
  double ess_treated = 0;
  double ess_control = 0;
};

// Odds weights (1 - e)/e, normalized within arm.
IpwPoint ipw_point(const Eigen::VectorXd& y, const Eigen::VectorXd& z, const Eigen::VectorXd& sample_scores);

// Least squares with an intercept; columns that are collinear with earlier
// ones are dropped (in column order).
struct LinearFit {
  Eigen::VectorXd coefficients;  // intercept then one per column, 0 where dropped
  std::vector<bool> kept;        // per column of x
  std::vector<std::string> warnings;

  Eigen::VectorXd predict(const Eigen::MatrixXd& x) const;
};
LinearFit fit_linear(const Eigen::MatrixXd& x, const Eigen::VectorXd& y);

struct OutcomeModelPoint {
  double estimate = 0;
  LinearFit treated;
  LinearFit control;
  Eigen::VectorXd target_mu1;
  Eigen::VectorXd target_mu0;
  Eigen::VectorXd sample_fitted;  // prediction under each unit's own arm
};
OutcomeModelPoint outcome_model_point(const EstimationProblem& p);

struct TmlePoint {
  double estimate = 0;
  double initial = 0;          // outcome-model estimate before fluctuation
  double epsilon_treated = 0;
  double epsilon_control = 0;
  double equation_treated = 0;  // sum H1 (Y - Q*) over sample units
  double equation_control = 0;
};
TmlePoint tmle_point(const EstimationProblem& p, const SelectionScores& scores);

struct FayHerriotFit {
  double between_variance = 0;
  Eigen::VectorXd beta;
  Eigen::VectorXd synthetic;
  Eigen::VectorXd shrinkage;  // A / (A + psi)
  Eigen::VectorXd eblup;
};

// Area-level model d = X beta + u + e with u ~ N(0, A), e ~ N(0, psi); A by REML.
FayHerriotFit fay_herriot_reml(const Eigen::VectorXd& direct, const Eigen::VectorXd& sampling_variance,
                               const Eigen::MatrixXd& design);
// Same model at a fixed A.
FayHerriotFit fay_herriot_at(const Eigen::VectorXd& direct, const Eigen::VectorXd& sampling_variance,
                             const Eigen::MatrixXd& design, double between_variance);

struct EblupStratum {
  std::size_t n_population = 0;
  std::size_t n_treated = 0;
  std::size_t n_control = 0;
  std::optional<double> direct;
  double sampling_variance = 0;
  double synthetic = 0;
  double eblup = 0;
};

struct EblupPoint {
  double estimate = 0;
  double between_variance = 0;
  bool synthetic_only = false;
  std::vector<EblupStratum> strata;
};

inline constexpr int kEblupStrata = 5;
EblupPoint eblup_point(const EstimationProblem& p, const SelectionScores& scores);

// --- bootstrap --------------------------------------------------------------

struct BootstrapResult {
  double se = 0;
  std::pair<double, double> ci95{0, 0};
  int succeeded = 0;
  int failed = 0;
  std::map<std::string, int> failure_census;
  std::vector<double> replicates;  // successful replicates, in replicate order
};

// Resamples sample units within arm (targets fixed), re-fits everything per
// replicate. Replicate r draws from derive_seed(seed, r). Throws Error when more
// than 20% of replicates fail. BART is not bootstrapped.
std::vector<BootstrapResult> bootstrap_many(const std::vector<EstimatorKind>& kinds, const EstimationProblem& p,
                                            int replicates, std::uint64_t seed,
                                            const PropensityOptions& options = {});
BootstrapResult bootstrap_se(EstimatorKind kind, const EstimationProblem& p, int replicates, std::uint64_t seed,
                             const PropensityOptions& options = {});
BootstrapResult bootstrap_se(EstimatorKind kind, const UnitFrame& frame, const Subpopulation& sub,
                             std::string_view outcome, int replicates, std::uint64_t seed);

// --- frame-level estimators ---------------------------------------------------

PateEstimate estimate_ipw(const UnitFrame& frame, const Subpopulation& sub, const PropensityFit& fit,
                          std::string_view outcome, const EstimateOptions& options);
PateEstimate estimate_outcome_model(const UnitFrame& frame, const Subpopulation& sub, std::string_view outcome,
                                    const EstimateOptions& options);
PateEstimate estimate_tmle(const UnitFrame& frame, const Subpopulation& sub, const PropensityFit& fit,
                           std::string_view outcome, const EstimateOptions& options);
PateEstimate estimate_eblup(const UnitFrame& frame, const Subpopulation& sub, const PropensityFit& fit,
                            std::string_view outcome, const EstimateOptions& options);
PateEstimate estimate_bart(const UnitFrame& frame, const Subpopulation& sub, std::string_view outcome,
                           const EstimateOptions& options);

// The BART fit only sees sample units, so one posterior serves every
// subpopulation; results are in `subs` order.
std::vector<PateEstimate> estimate_bart_many(const UnitFrame& frame, const std::vector<Subpopulation>& subs,
                                             std::string_view outcome, const EstimateOptions& options);

// Several non-BART estimators on one subpopulation with a shared bootstrap.
std::vector<PateEstimate> estimate_many(const std::vector<EstimatorKind>& kinds, const UnitFrame& frame,
                                        const Subpopulation& sub, const PropensityFit& fit,
                                        std::string_view outcome, const EstimateOptions& options);

PateEstimate estimate(EstimatorKind kind, const UnitFrame& frame, const Subpopulation& sub,
                      const PropensityFit& fit, std::string_view outcome, const EstimateOptions& options);

}  // namespace genpop
