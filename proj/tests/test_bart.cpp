#include <doctest.h>

#include <cmath>
#include <random>

#include "genpop/bart.hpp"
#include "genpop/error.hpp"
#include "genpop/estimators.hpp"
#include "genpop/random.hpp"
#include "support.hpp"

using namespace genpop;
using namespace testing;

namespace {

struct Data {
  Eigen::MatrixXd x;
  Eigen::VectorXd z, y;
  Eigen::MatrixXd targets;
};

// y = tau z + 1{x1 > 0} (+ noise), three covariates.
Data step_data(int n, double tau, double noise, std::uint64_t seed) {
  Rng rng = make_rng(seed);
  std::normal_distribution<double> g(0, 1);
  Data d{Eigen::MatrixXd(n, 3), Eigen::VectorXd(n), Eigen::VectorXd(n), Eigen::MatrixXd(500, 3)};
  for (int i = 0; i < n; ++i) {
    for (int k = 0; k < 3; ++k) d.x(i, k) = g(rng);
    d.z(i) = i % 2;
    d.y(i) = tau * d.z(i) + (d.x(i, 0) > 0 ? 1 : 0) + noise * g(rng);
  }
  for (int i = 0; i < 500; ++i)
    for (int k = 0; k < 3; ++k) d.targets(i, k) = g(rng);
  return d;
}

double posterior_mean(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

}  // namespace

TEST_CASE("config validation") {
  BartConfig c;
  CHECK_NOTHROW(c.validate());
  c.trees = 0;
  CHECK_THROWS_AS(c.validate(), Error);
  c = {};
  c.sigma_q = 1.0;
  CHECK_THROWS_AS(c.validate(), Error);
  c = {};
  c.alpha_tree = 1.5;
  CHECK_THROWS_AS(c.validate(), Error);
}

TEST_CASE("step-function DGP at desk scale") {
  const auto d = step_data(200, 2.0, 0.0, 1);
  const auto post = bart_average_effects(d.x, d.z, d.y, {d.targets}, BartConfig{}, 7);
  REQUIRE(post.average_effects.size() == 1);
  CHECK(post.average_effects[0].size() == 1000);
  CHECK(std::abs(posterior_mean(post.average_effects[0]) - 2.0) < 0.15);
  CHECK(post.acceptance_rate > 0);
}

TEST_CASE("step-function DGP with noise") {
  const auto d = step_data(200, 2.0, 0.5, 2);
  const auto post = bart_average_effects(d.x, d.z, d.y, {d.targets}, BartConfig{}, 8);
  CHECK(std::abs(posterior_mean(post.average_effects[0]) - 2.0) < 0.15);
  // Error sd is recovered on the original scale.
  CHECK(posterior_mean(post.sigma_draws) == doctest::Approx(0.5).epsilon(0.3));
}

TEST_CASE("constant outcome gives a null effect") {
  auto d = step_data(120, 0, 0, 3);
  d.y.setConstant(4.2);
  const auto post = bart_average_effects(d.x, d.z, d.y, {d.targets}, BartConfig{}, 1);
  CHECK(std::abs(posterior_mean(post.average_effects[0])) < 0.01);
  for (double f : post.fitted_mean) CHECK(std::abs(f - 4.2) < 0.01);
}

TEST_CASE("same seed, same chain") {
  const auto d = step_data(80, 1.0, 1.0, 4);
  BartConfig c;
  c.burn_in = 100;
  c.draws = 200;
  const auto a = bart_average_effects(d.x, d.z, d.y, {d.targets}, c, 11);
  const auto b = bart_average_effects(d.x, d.z, d.y, {d.targets}, c, 11);
  CHECK(a.average_effects == b.average_effects);
  CHECK(a.sigma_draws == b.sigma_draws);
  const auto other = bart_average_effects(d.x, d.z, d.y, {d.targets}, c, 12);
  CHECK(other.average_effects != a.average_effects);
}

TEST_CASE("row-set targets agree with stacked matrices") {
  const auto d = step_data(80, 1.0, 1.0, 5);
  BartConfig c;
  c.burn_in = 50;
  c.draws = 100;
  const std::vector<std::size_t> first{0, 1, 2, 3, 4, 5, 6, 7, 8, 9}, second{5, 6, 7, 100, 200, 300};
  Eigen::MatrixXd m1(10, 3), m2(6, 3);
  for (int i = 0; i < 10; ++i) m1.row(i) = d.targets.row(static_cast<Eigen::Index>(first[i]));
  for (int i = 0; i < 6; ++i) m2.row(i) = d.targets.row(static_cast<Eigen::Index>(second[i]));
  const auto a = bart_average_effects(d.x, d.z, d.y, d.targets, {first, second}, c, 3);
  const auto b = bart_average_effects(d.x, d.z, d.y, {m1, m2}, c, 3);
  REQUIRE(a.average_effects.size() == 2);
  for (std::size_t s = 0; s < 2; ++s)
    for (std::size_t k = 0; k < a.average_effects[s].size(); ++k)
      CHECK(a.average_effects[s][k] == doctest::Approx(b.average_effects[s][k]).epsilon(1e-12));
}

TEST_CASE("treatment must be binary") {
  auto d = step_data(40, 1.0, 1.0, 6);
  d.z(3) = 0.5;
  CHECK_THROWS_AS(bart_average_effects(d.x, d.z, d.y, {d.targets}, BartConfig{}, 1), Error);
}

TEST_CASE("frame-level bart reports a posterior sd and interval") {
  const auto d = step_data(60, 1.0, 0.5, 9);
  std::vector<UnitRecord> units;
  for (Eigen::Index i = 0; i < d.x.rows(); ++i)
    units.push_back(sample_unit("s" + std::to_string(i), {d.x(i, 0), d.x(i, 1), d.x(i, 2)}, d.z(i) > 0.5, {d.y(i)}));
  for (Eigen::Index i = 0; i < 100; ++i)
    units.push_back(population_unit("p" + std::to_string(i), {d.targets(i, 0), d.targets(i, 1), d.targets(i, 2)}));
  const auto frame = make_frame(continuous_schema(3), units);
  EstimateOptions o;
  o.seed = 5;
  o.bart.burn_in = 100;
  o.bart.draws = 300;
  const auto e = estimate_bart(frame, original_population(frame), "Y", o);
  REQUIRE(e.se.has_value());
  CHECK(*e.se > 0);
  CHECK(e.ci95->first < e.estimate);
  CHECK(e.ci95->second > e.estimate);
  CHECK(e.diagnostics["posterior_draws"] == 300);
}
