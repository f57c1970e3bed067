#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "genpop/error.hpp"
#include "genpop/random.hpp"
#include "genpop/redefine.hpp"
#include "support.hpp"

using namespace genpop;
using namespace testing;

namespace {

// Sample units get the first sample_scores, population-only units the rest.
struct Scored {
  UnitFrame frame;
  PropensityFit fit;
};

Scored scored_frame(const std::vector<double>& sample_scores, const std::vector<double>& population_scores) {
  std::vector<UnitRecord> units;
  std::vector<double> scores;
  for (std::size_t i = 0; i < sample_scores.size(); ++i) {
    units.push_back(sample_unit("s" + std::to_string(i), {sample_scores[i]}, i % 2 == 0, {0}));
    scores.push_back(sample_scores[i]);
  }
  for (std::size_t i = 0; i < population_scores.size(); ++i) {
    units.push_back(population_unit("p" + std::to_string(i), {population_scores[i]}));
    scores.push_back(population_scores[i]);
  }
  UnitFrame frame = make_frame(continuous_schema(1), units);
  PropensityFit fit = PropensityFit::from_scores(frame, scores);
  return {std::move(frame), std::move(fit)};
}

std::multiset<double> retained_scores(const Scored& s, const Subpopulation& sub) {
  std::multiset<double> out;
  for (auto r : sub.population_rows(s.frame)) out.insert(s.fit.scores[r]);
  return out;
}

double g(double e) { return 1.0 / (e * (1.0 - e)); }

// |1/(a(1-a)) - 2 mean g| over scores inside [a, 1-a], relative.
double crump_residual(const std::vector<double>& scores, double a) {
  double sum = 0;
  int k = 0;
  for (double e : scores)
    if (e >= a && e <= 1 - a) sum += g(e), ++k;
  if (k == 0) return INFINITY;
  return std::abs(g(a) - 2 * sum / k) / g(a);
}

}  // namespace

TEST_CASE("crump: all scores 0.5") {
  const std::vector<double> half(200, 0.5);
  const auto cut = crump_alpha(half);
  CHECK(cut.solved);
  CHECK(cut.alpha == doctest::Approx((1 - std::sqrt(0.5)) / 2).epsilon(1e-9));
  CHECK(std::abs(cut.alpha - 0.1464466) < 1e-6);
  const auto s = scored_frame({0.5, 0.5}, half);
  CHECK(trim_crump(s.frame, s.fit).n0 == 200);
}

TEST_CASE("crump: scores uniform on [0.4, 0.6] are all retained") {
  std::vector<double> scores;
  for (int i = 0; i <= 100; ++i) scores.push_back(0.4 + 0.2 * i / 100.0);
  const auto cut = crump_alpha(scores);
  CHECK(cut.alpha < 0.4);
  CHECK(crump_residual(scores, cut.alpha) < 1e-12);
  const auto s = scored_frame({0.45, 0.55}, scores);
  CHECK(trim_crump(s.frame, s.fit).n0 == scores.size());
}

TEST_CASE("crump: single score 0.9") {
  const std::vector<double> one{0.9};
  const auto cut = crump_alpha(one);
  // One unit: a(1-a) = 0.09 / 2.
  CHECK(cut.alpha == doctest::Approx((1 - std::sqrt(1 - 4 * 0.045)) / 2).epsilon(1e-12));
  CHECK(std::abs(cut.alpha - 0.0472) < 1e-4);
  CHECK(crump_residual(one, cut.alpha) < 1e-12);
}

TEST_CASE("crump: solved alpha satisfies the condition and no smaller root exists") {
  Rng rng = make_rng(17);
  std::uniform_real_distribution<double> u(0, 1);
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<double> scores;
    for (int i = 0; i < 300; ++i) {
      const double e = std::pow(u(rng), 1.5 + trial * 0.1);
      scores.push_back(std::clamp(e, 1e-4, 1 - 1e-4));
    }
    const auto cut = crump_alpha(scores);
    if (!cut.solved) continue;
    CHECK(crump_residual(scores, cut.alpha) < 1e-9);
    // Brute force: every candidate cutoff at an observed score, smaller than alpha,
    // retains a set whose threshold does not reach that score.
    for (double e : scores) {
      const double a = std::min(e, 1 - e);
      if (a >= cut.alpha - 1e-12) continue;
      double sum = 0;
      int k = 0;
      for (double f : scores)
        if (f >= a && f <= 1 - a) sum += g(f), ++k;
      CHECK(g(a) > 2 * sum / k);
    }
  }
}

TEST_CASE("crump: fallback and overrides") {
  const auto s = scored_frame({0.2, 0.3}, {0.05, 0.15, 0.95});
  const auto sub = trim_crump(s.frame, s.fit, 0.1);
  CHECK(retained_scores(s, sub) == std::multiset<double>{0.15});
  CHECK(sub.rows.size() == 3);  // both sample units kept
  CHECK(trim_crump(s.frame, s.fit, 0.0).n0 == 3);
  CHECK_THROWS_AS(trim_crump(s.frame, s.fit, 0.6), Error);
  CHECK_THROWS_WITH_AS(trim_crump(s.frame, s.fit, 0.5), "empty subpopulation (crump)", Error);
}

TEST_CASE("crump on bimodal scores equals an interval filter; nesting in alpha") {
  Rng rng = make_rng(23);
  std::normal_distribution<double> lo(0.12, 0.05), hi(0.8, 0.08);
  std::vector<double> pop;
  for (int i = 0; i < 400; ++i) pop.push_back(std::clamp(i % 3 == 0 ? hi(rng) : lo(rng), 0.001, 0.999));
  const auto s = scored_frame({0.3, 0.4, 0.5, 0.6}, pop);
  const auto sub = trim_crump(s.frame, s.fit);
  const double a = sub.provenance["alpha"].get<double>();
  std::multiset<double> expect;
  for (double e : pop)
    if (e >= a && e <= 1 - a) expect.insert(e);
  CHECK(retained_scores(s, sub) == expect);

  std::size_t previous = pop.size() + 1;
  for (double alpha = 0; alpha <= 0.25; alpha += 0.05) {
    const auto t = trim_crump(s.frame, s.fit, alpha);
    CHECK(t.n0 <= previous);
    previous = t.n0;
    const auto next = trim_crump(s.frame, s.fit, alpha + 0.01);
    const std::set<std::size_t> outer(t.rows.begin(), t.rows.end());
    for (auto r : next.rows) CHECK(outer.count(r) == 1);
  }
}

TEST_CASE("minmax trimming is inclusive at the sample range") {
  const auto s = scored_frame({0.2, 0.6, 0.4}, {0.1, 0.2, 0.61});
  const auto sub = trim_minmax(s.frame, s.fit);
  CHECK(retained_scores(s, sub) == std::multiset<double>{0.2});
  CHECK(sub.provenance["min_score"] == 0.2);

  const auto nested = scored_frame({0.1, 0.9}, {0.3, 0.5, 0.7});
  CHECK(trim_minmax(nested.frame, nested.fit).n0 == 3);
}

TEST_CASE("quantile trimming uses the interpolated sample percentile") {
  const auto s = scored_frame({0.1, 0.2, 0.3, 0.4}, {0.2, 0.26});
  const auto sub = trim_quantile(s.frame, s.fit, 50);
  CHECK(sub.provenance["cut"].get<double>() == doctest::Approx(0.25).epsilon(1e-14));
  CHECK(retained_scores(s, sub) == std::multiset<double>{0.2});
  CHECK(sub.label == "quantile:50");
  CHECK(sub.rows.size() == 5);  // every sample unit, including the one above the cut

  const auto low = scored_frame({0.1, 0.5, 0.9}, {0.2, 0.3, 0.4});
  CHECK(trim_quantile(low.frame, low.fit, 99).n0 == 3);
  CHECK_THROWS_AS(trim_quantile(low.frame, low.fit, 49), Error);
  CHECK_THROWS_AS(trim_quantile(low.frame, low.fit, 99.5), Error);
}

TEST_CASE("covariate trimming: enrollment range [500, 1000]") {
  const CovariateSchema schema({{"enrollment", CovariateKind::continuous, ""}, {"title1", CovariateKind::binary, ""}});
  const auto frame = make_frame(schema, {sample_unit("a", {500, 1}, true, {0}), sample_unit("b", {1000, 1}, false, {0}),
                                         population_unit("c", {499, 1}), population_unit("d", {500, 1}),
                                         population_unit("e", {1000, 1}), population_unit("f", {1001, 1}),
                                         population_unit("g", {700, 0})});
  const auto sub = trim_covariates(frame);
  CHECK(sub.retained_ids == std::vector<std::string>{"a", "b", "d", "e"});
  CHECK(sub.n0 == 2);
}

TEST_CASE("covariate trimming equals a brute-force interval scan") {
  Rng rng = make_rng(31);
  std::normal_distribution<double> z(0, 1);
  std::vector<UnitRecord> units;
  for (int i = 0; i < 30; ++i) units.push_back(sample_unit("s" + std::to_string(i), {z(rng) * 0.6, z(rng) * 0.6 + 0.3, z(rng) * 0.5}, i % 2 == 0, {0}));
  for (int i = 0; i < 500; ++i) units.push_back(population_unit("p" + std::to_string(i), {z(rng), z(rng), z(rng)}));
  const auto frame = make_frame(continuous_schema(3), units);
  const auto sub = trim_covariates(frame);
  std::vector<std::string> expect;
  for (std::size_t r = 0; r < frame.size(); ++r) {
    bool in = true;
    for (std::size_t k = 0; k < 3; ++k) {
      double lo = INFINITY, hi = -INFINITY;
      for (auto s : frame.sample_rows()) lo = std::min(lo, frame[s].covariates[k]), hi = std::max(hi, frame[s].covariates[k]);
      in = in && frame[r].covariates[k] >= lo && frame[r].covariates[k] <= hi;
    }
    if (in) expect.push_back(frame[r].id);
  }
  CHECK(sub.retained_ids == expect);

  // A population already inside the sample hull loses nothing.
  std::vector<UnitRecord> inside{sample_unit("a", {0, 0, 0}, true, {0}), sample_unit("b", {1, 1, 1}, false, {0})};
  for (int i = 0; i < 20; ++i) inside.push_back(population_unit("p" + std::to_string(i), {i / 20.0, i / 20.0, 0.5}));
  CHECK(trim_covariates(make_frame(continuous_schema(3), inside)).n0 == 20);
}

TEST_CASE("original population and provenance") {
  const auto s = scored_frame({0.2, 0.4}, {0.1, 0.3, 0.5});
  const auto sub = original_population(s.frame);
  CHECK(sub.n0 == 3);
  CHECK(sub.rows.size() == 5);
  nlohmann::json j = sub;
  CHECK(j["label"] == "original");
  CHECK(j["n0"] == 3);
}
