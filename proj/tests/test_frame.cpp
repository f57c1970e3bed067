#include <doctest.h>

#include <algorithm>
#include <random>
#include <set>
#include <sstream>

#include "genpop/error.hpp"
#include "genpop/frame.hpp"
#include "genpop/random.hpp"
#include "genpop/stats.hpp"
#include "support.hpp"

using namespace genpop;
using namespace testing;

namespace {

UnitFrame parse(const std::string& text, const CovariateSchema& schema) {
  std::istringstream in(text);
  return read_csv(in, schema);
}

std::string error_of(const std::string& text, const CovariateSchema& schema) {
  try {
    parse(text, schema);
  } catch (const Error& e) {
    return e.what();
  }
  return "";
}

CovariateSchema xb_schema() {
  return CovariateSchema({{"x", CovariateKind::continuous, ""}, {"b", CovariateKind::binary, ""}});
}

const char* kHeader = "id,membership,treatment,outcome:Y,x,b\n";

}  // namespace

TEST_CASE("schema rejects empty, blank and duplicate names") {
  CHECK_THROWS_AS(CovariateSchema(std::vector<CovariateSpec>{}), Error);
  CHECK_THROWS_AS(CovariateSchema({{" ", CovariateKind::continuous, ""}}), Error);
  CHECK_THROWS_AS(CovariateSchema({{"x", CovariateKind::continuous, ""}, {"X", CovariateKind::binary, ""}}), Error);
  const auto s = CovariateSchema::from_json(
      nlohmann::json::parse(R"({"covariates":[{"name":"enrollment","units":"count"},{"name":"title1","kind":"binary"}]})"));
  CHECK(s.size() == 2);
  CHECK(s[1].kind == CovariateKind::binary);
  CHECK(s.index_of("ENROLLMENT") == 0u);
  CHECK_THROWS_AS(CovariateSchema::from_json(nlohmann::json::parse(R"({"covariates":[{"name":"a","kind":"ordinal"}]})")),
                  UsageError);
  CHECK(CovariateSchema::from_json(s.to_json()).to_json() == s.to_json());
}

TEST_CASE("indiana schema has the fourteen school covariates") {
  const auto s = indiana_schema();
  CHECK(s.size() == 14);
  CHECK(s.index_of("prop_frpl").has_value());
  CHECK(s[*s.index_of("title1")].kind == CovariateKind::binary);
}

TEST_CASE("bundled data: 54 sample and 1460 population schools") {
  const auto schema = CovariateSchema::load(source_path("data/indiana_like.schema.json"));
  const auto frame = load_csv(source_path("data/indiana_like.csv"), schema);
  CHECK(frame.sample_count() == 54);
  CHECK(frame.population_count() == 1460);
  CHECK(frame.outcome_names() == std::vector<std::string>{"ELA", "Math"});
  CHECK(frame.is_small_study());
  CHECK_NOTHROW(frame.require_estimable());
}

TEST_CASE("csv errors name the row") {
  const auto schema = xb_schema();
  CHECK(error_of("", schema) == "no data rows");
  CHECK(error_of(kHeader, schema) == "no data rows");
  CHECK(error_of(std::string(kHeader) + "a,sample,1,,0.5,1\n", schema) == "row 2: sample row lacks outcome 'Y'");
  CHECK(error_of(std::string(kHeader) + "a,population,,,0.5,1\nb,sample,1,2,abc,0\n", schema) ==
        "row 3: non-numeric value for 'x'");
  CHECK(error_of(std::string(kHeader) + "a,population,,,0.5,2\n", schema) ==
        "row 2: binary covariate 'b' must be 0 or 1");
  CHECK(error_of(std::string(kHeader) + "a,population,,,0.5,1\na,population,,,0.5,1\n", schema) ==
        "row 3: duplicate id 'a'");
  CHECK(error_of(std::string(kHeader) + "a,population,1,,0.5,1\n", schema) ==
        "row 2: treatment present on a population row");
  CHECK(error_of("id,membership,treatment,outcome:Y,x\na,population,,,1\n", schema) == "missing column 'b'");
  CHECK(error_of(std::string(kHeader) + "a,population,,,,1\n", schema) == "row 2: missing value for 'x'");
  CHECK(error_of(std::string(kHeader) + "a,population,,,nan,1\n", schema) == "row 2: non-numeric value for 'x'");
}

TEST_CASE("header matching is case-insensitive and trims whitespace") {
  const auto frame = parse(" ID , Membership,TREATMENT, Outcome:Y , X ,B\n"
                           "s1,sample,1,3.5,0.25,1\n"
                           "p1,population,,,0.75,0\n",
                           xb_schema());
  REQUIRE(frame.size() == 2);
  CHECK(frame[0].outcomes == std::vector<double>{3.5});
  CHECK(frame[1].covariates == std::vector<double>{0.75, 0});
  CHECK(frame.outcome_names() == std::vector<std::string>{"Y"});
}

TEST_CASE("csv round trip is bit-exact on random frames") {
  Rng rng = make_rng(99);
  std::uniform_int_distribution<int> count(1, 12), kind(0, 5);
  std::uniform_real_distribution<double> u(-1, 1);
  std::bernoulli_distribution coin(0.5);
  for (int trial = 0; trial < 200; ++trial) {
    const int p = count(rng) % 5 + 1;
    std::vector<CovariateSpec> specs;
    for (int k = 0; k < p; ++k)
      specs.push_back({"c" + std::to_string(k), coin(rng) ? CovariateKind::binary : CovariateKind::continuous, ""});
    const CovariateSchema schema(specs);
    auto value = [&](CovariateKind k) {
      if (k == CovariateKind::binary) return coin(rng) ? 1.0 : 0.0;
      switch (kind(rng)) {
        case 0: return u(rng) * 1e300;
        case 1: return u(rng) * 1e-300;
        case 2: return std::round(u(rng) * 1000) / 10;
        case 3: return 0.1 * std::floor(u(rng) * 50);
        case 4: return std::nextafter(u(rng), 2.0);
        default: return u(rng);
      }
    };
    std::vector<UnitRecord> units;
    const int n = count(rng);
    for (int i = 0; i < n; ++i) {
      std::vector<double> x;
      for (const auto& s : specs) x.push_back(value(s.kind));
      const std::string id = "u" + std::to_string(i) + (i % 3 == 0 ? ",q\"" : "");
      if (coin(rng))
        units.push_back(sample_unit(id, x, coin(rng), {value(CovariateKind::continuous), u(rng)}));
      else
        units.push_back(population_unit(id, x));
    }
    const UnitFrame frame(schema, {"A", "B"}, units);
    std::ostringstream first;
    write_csv(first, frame);
    const UnitFrame back = parse(first.str(), schema);
    std::ostringstream second;
    write_csv(second, back);
    REQUIRE(first.str() == second.str());
    for (std::size_t i = 0; i < frame.size(); ++i) {
      CHECK(back[i].id == frame[i].id);
      CHECK(back[i].covariates == frame[i].covariates);
      CHECK(back[i].outcomes == frame[i].outcomes);
    }
  }
}

TEST_CASE("summarize: population means cover every unit") {
  const auto schema = continuous_schema(1);
  // Sample {1, 3}, population-only {5, 7}: sample mean 2, census mean 4.
  const auto frame = make_frame(schema, {sample_unit("a", {1}, true, {0}), sample_unit("b", {3}, false, {0}),
                                         population_unit("c", {5}), population_unit("d", {7})});
  const auto m = summarize(frame);
  REQUIRE(m.size() == 1);
  CHECK(m[0].sample_mean == 2.0);
  CHECK(m[0].population_mean == 4.0);

  // Pretest-ELA style figures echo back: sample 19.41, census 18.82.
  const auto t1 = make_frame(schema, {sample_unit("a", {19.41}, true, {0}), sample_unit("b", {19.41}, false, {0}),
                                      population_unit("c", {18.23}), population_unit("d", {18.23})});
  CHECK(summarize(t1)[0].sample_mean == doctest::Approx(19.41).epsilon(1e-12));
  CHECK(summarize(t1)[0].population_mean == doctest::Approx(18.82).epsilon(1e-12));

  const auto same = make_frame(schema, {sample_unit("a", {1}, true, {0}), sample_unit("b", {2}, false, {0}),
                                        population_unit("c", {1}), population_unit("d", {2})});
  CHECK(summarize(same)[0].sample_mean == summarize(same)[0].population_mean);
}

TEST_CASE("summarize is invariant to row order") {
  Rng rng = make_rng(5);
  std::normal_distribution<double> z(0, 10);
  const auto schema = continuous_schema(3);
  std::vector<UnitRecord> units;
  for (int i = 0; i < 40; ++i) {
    std::vector<double> x{z(rng), z(rng), z(rng)};
    units.push_back(i < 8 ? sample_unit("s" + std::to_string(i), x, i % 2 == 0, {0}) : population_unit("p" + std::to_string(i), x));
  }
  const auto base = summarize(make_frame(schema, units));
  for (int t = 0; t < 10; ++t) {
    std::shuffle(units.begin(), units.end(), rng);
    const auto m = summarize(make_frame(schema, units));
    for (std::size_t k = 0; k < m.size(); ++k) {
      CHECK(m[k].sample_mean == doctest::Approx(base[k].sample_mean).epsilon(1e-12));
      CHECK(m[k].population_mean == doctest::Approx(base[k].population_mean).epsilon(1e-12));
    }
  }
}

TEST_CASE("frame invariants are enforced at construction") {
  const auto schema = xb_schema();
  CHECK_THROWS_AS(make_frame(schema, {population_unit("a", {1})}), Error);                 // wrong width
  CHECK_THROWS_AS(make_frame(schema, {population_unit("a", {1, 0.5})}), Error);            // binary
  CHECK_THROWS_AS(make_frame(schema, {population_unit("a", {NAN, 0})}), Error);            // finite
  CHECK_THROWS_AS(make_frame(schema, {population_unit("a", {1, 0}), population_unit("a", {1, 0})}), Error);
  auto bad = population_unit("a", {1, 0});
  bad.treatment = Arm::treated;
  CHECK_THROWS_AS(make_frame(schema, {bad}), Error);
  const auto one_arm = make_frame(schema, {sample_unit("a", {1, 0}, true, {1}), population_unit("b", {1, 0})});
  CHECK_THROWS_AS(one_arm.require_estimable(), Error);
}

TEST_CASE("policy grammar") {
  auto p = PolicyPredicate::parse("prop_frpl>0.75");
  CHECK(p.covariate == "prop_frpl");
  CHECK(p.comparator == Comparator::greater);
  CHECK(p.threshold == 0.75);
  CHECK(PolicyPredicate::parse("x <= -1").comparator == Comparator::less_equal);
  CHECK(PolicyPredicate::parse("x<-1").threshold == -1);
  CHECK(PolicyPredicate::parse("rural=1").comparator == Comparator::equal);
  p = PolicyPredicate::parse("pretest_math@[0,0.25]");
  CHECK(p.comparator == Comparator::in_quantile_range);
  CHECK(p.quantile_range == std::pair<double, double>{0, 0.25});
  CHECK(parse_policy("urban=0 & rural=0").size() == 2);
  CHECK_THROWS_AS(PolicyPredicate::parse("x@[0.5,1.5]"), UsageError);
  CHECK_THROWS_AS(PolicyPredicate::parse("x@[0.6,0.5]"), UsageError);
  CHECK_THROWS_AS(PolicyPredicate::parse("x~3"), UsageError);
  CHECK_THROWS_AS(PolicyPredicate::parse(">3"), UsageError);
  CHECK_THROWS_AS(parse_policy(" & "), UsageError);
  CHECK(PolicyPredicate::parse(PolicyPredicate::parse("x>=0.1").to_string()).threshold == 0.1);
}

namespace {

UnitFrame policy_frame(int population, std::uint64_t seed) {
  Rng rng = make_rng(seed);
  std::uniform_real_distribution<double> u(0, 1);
  std::normal_distribution<double> z(500, 30);
  const CovariateSchema schema({{"prop_frpl", CovariateKind::continuous, ""},
                                {"pretest_math", CovariateKind::continuous, ""},
                                {"rural", CovariateKind::binary, ""}});
  std::vector<UnitRecord> units;
  for (int i = 0; i < 10; ++i)
    units.push_back(sample_unit("s" + std::to_string(i), {u(rng) * 0.7, z(rng), i % 2 == 0 ? 1.0 : 0.0}, i % 2 == 0, {1}));
  for (int i = 0; i < population; ++i)
    units.push_back(population_unit("p" + std::to_string(i), {u(rng), z(rng), u(rng) < 0.5 ? 1.0 : 0.0}));
  return make_frame(schema, units);
}

}  // namespace

TEST_CASE("filter_policy: thresholds, identity and errors") {
  const auto schema = continuous_schema(1);
  std::vector<UnitRecord> units{sample_unit("s1", {0.2}, true, {1}), sample_unit("s2", {0.9}, false, {1})};
  // 421 of 1000 population schools above 0.75.
  for (int i = 0; i < 1000; ++i) units.push_back(population_unit("p" + std::to_string(i), {i < 421 ? 0.8 : 0.5}));
  const auto frame = make_frame(schema, units);
  const auto frpl = filter_policy(frame, parse_policy("x1>0.75"));
  CHECK(frpl.n0 == 421);
  CHECK(frpl.rows.size() == 423);
  CHECK(frpl.method == RedefinitionMethod::policy);
  CHECK(filter_policy(frame, parse_policy("x1>=-1e300")).n0 == 1000);
  CHECK_THROWS_WITH_AS(filter_policy(frame, parse_policy("x1>5")), "empty subpopulation (policy)", Error);
  CHECK_THROWS_AS(filter_policy(frame, parse_policy("nope>1")), Error);
}

TEST_CASE("filter_policy quantile range equals a brute-force scan") {
  const auto frame = policy_frame(700, 11);
  const auto sub = filter_policy(frame, parse_policy("pretest_math@[0,0.25]"), "policy:math");
  std::vector<double> pop;
  for (auto r : frame.population_rows()) pop.push_back(frame[r].covariates[1]);
  std::sort(pop.begin(), pop.end());
  // Linear-interpolation quantile at position 0.25 * (n - 1).
  const double pos = 0.25 * static_cast<double>(pop.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const double cut = pop[lo] + (pos - static_cast<double>(lo)) * (pop[lo + 1] - pop[lo]);
  std::set<std::string> expect;
  for (std::size_t r = 0; r < frame.size(); ++r)
    if (frame.is_sample(r) || (frame[r].covariates[1] >= pop.front() && frame[r].covariates[1] <= cut))
      expect.insert(frame[r].id);
  CHECK(std::set<std::string>(sub.retained_ids.begin(), sub.retained_ids.end()) == expect);
  CHECK(sub.n0 == expect.size() - frame.sample_count());
}

TEST_CASE("filter_policy keeps every sample unit and is idempotent") {
  const auto frame = policy_frame(300, 3);
  const auto preds = parse_policy("prop_frpl>0.5&rural=1");
  const auto once = filter_policy(frame, preds);
  for (auto r : frame.sample_rows())
    CHECK(std::find(once.rows.begin(), once.rows.end(), r) != once.rows.end());
  std::vector<UnitRecord> kept;
  for (auto r : once.rows) kept.push_back(frame[r]);
  const auto twice = filter_policy(UnitFrame(frame.schema(), frame.outcome_names(), kept), preds);
  CHECK(twice.retained_ids == once.retained_ids);
}
