#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

namespace genpop {

// Sum-of-trees prior and chain length. Defaults are the desk-scale settings.
struct BartConfig {
  int trees = 50;
  int burn_in = 500;
  int draws = 1000;
  double alpha_tree = 0.95;   // split probability alpha * (1 + depth)^-beta
  double beta_tree = 2.0;
  double leaf_scale_k = 2.0;  // leaf prior sd = 0.5 / (k sqrt(trees)) on the scaled outcome
  double sigma_nu = 3.0;
  double sigma_q = 0.90;

  // Throws Error when a field is out of range.
  void validate() const;
};

void to_json(nlohmann::json& j, const BartConfig& c);

struct BartPosterior {
  // Per target set, per kept draw: mean over the set of f(z=1, x) - f(z=0, x).
  std::vector<std::vector<double>> average_effects;
  std::vector<double> fitted_mean;  // posterior mean of f at the training rows
  std::vector<double> sigma_draws;  // error sd, original scale, per kept draw
  double acceptance_rate = 0;
  std::size_t sweeps_without_acceptance = 0;
  std::vector<std::string> warnings;
};

// Backfitting MCMC for y ~ f(z, x) + N(0, sigma^2) on the training rows, with
// grow/prune/change proposals (0.28/0.28/0.44), conjugate normal leaves and an
// inverse-gamma error variance. The chain is a pure function of the inputs and seed.
BartPosterior bart_average_effects(const Eigen::MatrixXd& x, const Eigen::VectorXd& z, const Eigen::VectorXd& y,
                                   const std::vector<Eigen::MatrixXd>& target_sets, const BartConfig& config,
                                   std::uint64_t seed);
// Same, with the target sets given as row subsets of one matrix; rows shared by
// several sets are traversed once.
BartPosterior bart_average_effects(const Eigen::MatrixXd& x, const Eigen::VectorXd& z, const Eigen::VectorXd& y,
                                   const Eigen::MatrixXd& targets, const std::vector<std::vector<std::size_t>>& sets,
                                   const BartConfig& config, std::uint64_t seed);

}  // namespace genpop
