#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "genpop/error.hpp"
#include "genpop/estimators.hpp"
#include "genpop/random.hpp"
#include "genpop/redefine.hpp"
#include "support.hpp"

using namespace genpop;
using namespace testing;

namespace {

Eigen::VectorXd vec(std::initializer_list<double> v) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

// Frame from x/z/y triples for the sample and x values for the population.
UnitFrame xy_frame(const std::vector<double>& x, const std::vector<int>& z, const std::vector<double>& y,
                   const std::vector<double>& pop) {
  std::vector<UnitRecord> units;
  for (std::size_t i = 0; i < x.size(); ++i) units.push_back(sample_unit("s" + std::to_string(i), {x[i]}, z[i] == 1, {y[i]}));
  for (std::size_t i = 0; i < pop.size(); ++i) units.push_back(population_unit("p" + std::to_string(i), {pop[i]}));
  return make_frame(continuous_schema(1), units);
}

// Synthetic selection + outcome frame with two covariates.
UnitFrame noisy_frame(std::uint64_t seed, int n = 80, int N = 600, double noise = 1.0, double y_shift = 0) {
  Rng rng = make_rng(seed);
  std::normal_distribution<double> g(0, 1);
  std::uniform_real_distribution<double> u(0, 1);
  std::vector<UnitRecord> units;
  int sampled = 0;
  for (int i = 0; sampled < n || i < N; ++i) {
    const double x1 = g(rng), x2 = g(rng);
    const bool in = sampled < n && u(rng) < 1 / (1 + std::exp(-(-1.5 + 0.6 * x1 - 0.3 * x2)));
    if (in) {
      const bool t = sampled % 2 == 0;
      const double y = y_shift + x1 + 0.5 * x2 + (t ? 1 + 0.5 * x1 : 0) + noise * g(rng);
      units.push_back(sample_unit("s" + std::to_string(sampled++), {x1, x2}, t, {y}));
    } else if (i < N) {
      units.push_back(population_unit("p" + std::to_string(i), {x1, x2}));
    }
  }
  return make_frame(continuous_schema(2), units);
}

EstimateOptions no_bootstrap(std::uint64_t seed = 1) {
  EstimateOptions o;
  o.seed = seed;
  o.bootstrap_b = 0;
  return o;
}

}  // namespace

TEST_CASE("estimator names") {
  for (auto k : kAllEstimators) CHECK(parse_estimator(to_string(k)) == k);
  CHECK(parse_estimator("outcome") == EstimatorKind::outcome_model);
  CHECK_THROWS_AS(parse_estimator("dr"), UsageError);
}

TEST_CASE("ipw: six-unit hand computation") {
  const auto y = vec({1, 2, 3, 0, 1, 5});
  const auto z = vec({1, 1, 1, 0, 0, 0});
  const auto e = vec({0.2, 0.5, 0.8, 0.25, 0.5, 0.1});
  // odds weights: treated 4, 1, 0.25; control 3, 1, 9
  const double treated = (4 * 1 + 1 * 2 + 0.25 * 3) / 5.25;
  const double control = (3 * 0 + 1 * 1 + 9 * 5) / 13.0;
  const auto r = ipw_point(y, z, e);
  CHECK(std::abs(r.estimate - (treated - control)) < 1e-12);
  CHECK(r.ess_treated == doctest::Approx(5.25 * 5.25 / (16 + 1 + 0.0625)).epsilon(1e-12));
}

TEST_CASE("ipw: equal scores give the difference in means") {
  const auto y = vec({1, 4, 2, 7, 0});
  const auto z = vec({1, 1, 0, 0, 0});
  const auto r = ipw_point(y, z, Eigen::VectorXd::Constant(5, 0.3));
  CHECK(r.estimate == doctest::Approx(2.5 - 3).epsilon(1e-14));
}

TEST_CASE("ipw through the frame with known scores") {
  const auto frame = xy_frame({0, 0, 0, 0, 0, 0}, {1, 1, 1, 0, 0, 0}, {1, 2, 3, 0, 1, 5}, {0, 0});
  const auto fit = PropensityFit::from_scores(frame, {0.2, 0.5, 0.8, 0.25, 0.5, 0.1, 0.3, 0.3});
  auto o = no_bootstrap();
  o.refit_propensity = false;
  const auto est = estimate_ipw(frame, original_population(frame), fit, "Y", o);
  CHECK(std::abs(est.estimate - ((4 + 2 + 0.75) / 5.25 - 46.0 / 13.0)) < 1e-12);
  CHECK_FALSE(est.se.has_value());
  CHECK(est.n0 == 2);
}

TEST_CASE("least squares: five-unit hand solution") {
  Eigen::MatrixXd x(5, 1);
  x << 1, 2, 3, 4, 5;
  // xbar 3, ybar 4, Sxy 9, Sxx 10.
  const auto f = fit_linear(x, vec({2, 3, 5, 4, 6}));
  CHECK(std::abs(f.coefficients(1) - 0.9) < 1e-10);
  CHECK(std::abs(f.coefficients(0) - 1.3) < 1e-10);
  Eigen::MatrixXd at(1, 1);
  at << 10;
  CHECK(std::abs(f.predict(at)(0) - 10.3) < 1e-10);
}

TEST_CASE("least squares drops collinear columns") {
  Eigen::MatrixXd x(6, 3);
  x << 1, 2, 5, 2, 4, 3, 3, 6, 8, 4, 8, 1, 5, 10, 0, 6, 12, 2;  // column 2 = 2 * column 1
  const auto y = vec({1, 2, 4, 3, 6, 5});
  const auto f = fit_linear(x, y);
  CHECK(f.kept == std::vector<bool>{true, false, true});
  CHECK(f.coefficients(2) == 0);
  CHECK_FALSE(f.warnings.empty());
  Eigen::MatrixXd constant = Eigen::MatrixXd::Constant(4, 1, 2.0);
  CHECK_THROWS_AS(fit_linear(constant, vec({1, 2, 3, 4})), Error);
}

TEST_CASE("outcome model: heterogeneous noiseless DGP") {
  // y(z) = x + z (1 + x): treated line 1 + 2x, control line x.
  const std::vector<double> x{0, 1, 2, 0.5, 1.5, 3};
  const std::vector<int> z{1, 1, 1, 0, 0, 0};
  std::vector<double> y;
  for (std::size_t i = 0; i < x.size(); ++i) y.push_back(x[i] + z[i] * (1 + x[i]));
  const std::vector<double> pop{-1, 0.25, 2, 4, 7};
  const auto frame = xy_frame(x, z, y, pop);
  const auto est = estimate_outcome_model(frame, original_population(frame), "Y", no_bootstrap());
  CHECK(std::abs(est.estimate - (1 + (-1 + 0.25 + 2 + 4 + 7) / 5.0)) < 1e-10);
  // Any subpopulation: here a hand mask keeping x in {0.25, 2}.
  const auto sub = Subpopulation::from_mask(frame, RedefinitionMethod::policy, "mask",
                                            {true, true, true, true, true, true, false, true, true, false, false}, {});
  CHECK(std::abs(estimate_outcome_model(frame, sub, "Y", no_bootstrap()).estimate - (1 + 1.125)) < 1e-10);
}

TEST_CASE("tmle solves its estimating equations") {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto frame = noisy_frame(seed);
    const auto p = make_problem(frame, original_population(frame), "Y");
    const auto s = selection_scores(p);
    const auto t = tmle_point(p, s);
    const auto q0 = outcome_model_point(p);
    double eq1 = 0, eq0 = 0;
    for (Eigen::Index i = 0; i < p.z.size(); ++i) {
      const double h = (1 - s.sample(i)) / s.sample(i);
      const double q = q0.sample_fitted(i) + (p.z(i) > 0.5 ? t.epsilon_treated : t.epsilon_control) * h;
      (p.z(i) > 0.5 ? eq1 : eq0) += h * (p.y(i) - q);
    }
    CHECK(std::abs(eq1) < 1e-8);
    CHECK(std::abs(eq0) < 1e-8);
    CHECK(std::abs(t.equation_treated) < 1e-8);
    CHECK(t.initial == q0.estimate);
  }
}

TEST_CASE("tmle with an exact initial fit does not move") {
  const auto frame = noisy_frame(3, 80, 600, 0.0);
  const auto p = make_problem(frame, original_population(frame), "Y");
  const auto t = tmle_point(p, selection_scores(p));
  CHECK(std::abs(t.epsilon_treated) < 1e-10);
  CHECK(std::abs(t.epsilon_control) < 1e-10);
  CHECK(t.estimate == doctest::Approx(t.initial).epsilon(1e-10));
}

TEST_CASE("fay-herriot limits") {
  const auto d = vec({1.0, 2.5, 0.5, 3.0, 1.7});
  const auto psi = vec({0.4, 0.3, 0.5, 0.2, 0.6});
  Eigen::MatrixXd X(5, 2);
  X << 1, -1, 1, 0, 1, 0.5, 1, 1, 1, 2;
  const auto full = fay_herriot_at(d, psi, X, 0.0);
  for (Eigen::Index j = 0; j < 5; ++j) CHECK(full.eblup(j) == doctest::Approx(full.synthetic(j)).epsilon(1e-12));

  auto psi0 = psi;
  psi0(2) = 0;
  const auto exact = fay_herriot_at(d, psi0, X, 0.3);
  CHECK(exact.eblup(2) == doctest::Approx(d(2)).epsilon(1e-12));

  const auto reml = fay_herriot_reml(d, psi, X);
  CHECK(reml.between_variance >= 0);
  for (Eigen::Index j = 0; j < 5; ++j) {
    CHECK(reml.shrinkage(j) >= 0);
    CHECK(reml.shrinkage(j) <= 1);
  }
}

TEST_CASE("fay-herriot: eblup is a convex combination of direct and synthetic") {
  Rng rng = make_rng(77);
  std::normal_distribution<double> g(0, 1);
  std::uniform_real_distribution<double> u(0.05, 1);
  for (int trial = 0; trial < 200; ++trial) {
    const int m = 3 + trial % 5;
    Eigen::VectorXd d(m), psi(m);
    Eigen::MatrixXd X(m, 2);
    for (int j = 0; j < m; ++j) {
      X(j, 0) = 1;
      X(j, 1) = g(rng);
      d(j) = 0.5 * X(j, 1) + g(rng) * (trial % 3);
      psi(j) = u(rng);
    }
    const auto f = fay_herriot_reml(d, psi, X);
    for (int j = 0; j < m; ++j) {
      const double lo = std::min(d(j), f.synthetic(j)), hi = std::max(d(j), f.synthetic(j));
      CHECK(f.eblup(j) >= lo - 1e-12);
      CHECK(f.eblup(j) <= hi + 1e-12);
    }
  }
}

TEST_CASE("eblup strata on a synthetic frame") {
  const auto frame = noisy_frame(5, 120, 800);
  const auto p = make_problem(frame, original_population(frame), "Y");
  const auto r = eblup_point(p, selection_scores(p));
  CHECK(r.strata.size() == static_cast<std::size_t>(kEblupStrata));
  std::size_t pop = 0;
  for (const auto& st : r.strata) {
    pop += st.n_population;
    if (st.direct) {
      CHECK(st.eblup >= std::min(*st.direct, st.synthetic) - 1e-9);
      CHECK(st.eblup <= std::max(*st.direct, st.synthetic) + 1e-9);
    }
  }
  CHECK(pop == static_cast<std::size_t>(p.target_x.rows()));
  CHECK(std::isfinite(r.estimate));
}

TEST_CASE("bootstrap: determinism, zero variance and stability") {
  const auto frame = noisy_frame(9);
  const auto sub = original_population(frame);
  const auto a = bootstrap_se(EstimatorKind::ipw, frame, sub, "Y", 200, 4242);
  const auto b = bootstrap_se(EstimatorKind::ipw, frame, sub, "Y", 200, 4242);
  CHECK(a.se == b.se);
  CHECK(a.replicates == b.replicates);
  CHECK(a.se > 0);
  CHECK(a.ci95.first < a.ci95.second);

  std::vector<UnitRecord> flat;
  for (const auto& u : frame.units()) {
    auto c = u;
    if (c.membership == Membership::sample) c.outcomes = {3.0};
    flat.push_back(c);
  }
  const auto constant = make_frame(frame.schema(), flat);
  for (auto k : {EstimatorKind::ipw, EstimatorKind::outcome_model, EstimatorKind::tmle})
    CHECK(bootstrap_se(k, constant, original_population(constant), "Y", 60, 1).se == doctest::Approx(0).epsilon(1e-9));

  const auto b1 = bootstrap_se(EstimatorKind::outcome_model, frame, sub, "Y", 1000, 99);
  const auto b2 = bootstrap_se(EstimatorKind::outcome_model, frame, sub, "Y", 2000, 99);
  CHECK(std::abs(b1.se / b2.se - 1) < 0.10);
}

TEST_CASE("bootstrap replicate counts are validated") {
  const auto frame = noisy_frame(2);
  auto o = no_bootstrap();
  o.bootstrap_b = 10;
  CHECK_THROWS_AS(estimate_outcome_model(frame, original_population(frame), "Y", o), Error);
}

TEST_CASE("estimate_many matches the single estimators and shares the seed") {
  const auto frame = noisy_frame(12);
  const auto fit = fit_propensity(frame);
  const auto sub = trim_crump(frame, fit);
  EstimateOptions o;
  o.seed = 5;
  o.bootstrap_b = 60;
  const auto many = estimate_many({EstimatorKind::ipw, EstimatorKind::outcome_model, EstimatorKind::tmle,
                                   EstimatorKind::eblup},
                                  frame, sub, fit, "Y", o);
  REQUIRE(many.size() == 4);
  CHECK(many[0].estimate == estimate_ipw(frame, sub, fit, "Y", o).estimate);
  CHECK(many[1].estimate == estimate_outcome_model(frame, sub, "Y", o).estimate);
  CHECK(many[2].estimate == estimate_tmle(frame, sub, fit, "Y", o).estimate);
  for (const auto& e : many) {
    CHECK(e.se.has_value());
    CHECK(e.ci95->first <= e.estimate);
    CHECK(e.ci95->second >= e.estimate);
    CHECK(e.subpopulation == "crump");
  }
}

TEST_CASE("constant-effect noiseless frame: exact recovery") {
  Rng rng = make_rng(4);
  std::normal_distribution<double> g(0, 1);
  std::vector<UnitRecord> units;
  for (int i = 0; i < 40; ++i) {
    const double x1 = g(rng) * 0.7 + 0.4, x2 = g(rng);
    const bool t = i % 2 == 0;
    units.push_back(sample_unit("s" + std::to_string(i), {x1, x2}, t, {2 * x1 - x2 + (t ? 1.0 : 0.0)}));
  }
  for (int i = 0; i < 300; ++i) units.push_back(population_unit("p" + std::to_string(i), {g(rng), g(rng)}));
  const auto frame = make_frame(continuous_schema(2), units);
  const auto fit = fit_propensity(frame);
  for (const auto& sub : {original_population(frame), trim_minmax(frame, fit)}) {
    CHECK(std::abs(estimate_outcome_model(frame, sub, "Y", no_bootstrap()).estimate - 1) < 1e-8);
    CHECK(std::abs(estimate_tmle(frame, sub, fit, "Y", no_bootstrap()).estimate - 1) < 1e-8);
  }
}
