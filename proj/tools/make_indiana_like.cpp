// Writes the bundled synthetic school frame: 54 study schools and 1460
// population-only schools with Indiana-like covariates, plus its schema.
#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <random>

#include "genpop/frame.hpp"
#include "genpop/random.hpp"
#include "genpop/stats.hpp"

using namespace genpop;

namespace {

double clamp(double v, double lo, double hi) { return std::min(hi, std::max(lo, v)); }

}  // namespace

int main(int argc, char** argv) {
  const std::filesystem::path dir = argc > 1 ? argv[1] : "data";
  const std::size_t n_population = 1460, n_sample = 54;
  Rng rng = make_rng(derive_seed(20130401, 7));
  std::normal_distribution<double> z01(0.0, 1.0);
  std::uniform_real_distribution<double> u01(0.0, 1.0);

  std::vector<CovariateSpec> specs = indiana_schema().specs();
  specs.push_back({"urban", CovariateKind::binary, "indicator"});
  specs.push_back({"rural", CovariateKind::binary, "indicator"});
  const CovariateSchema schema(specs);

  struct School {
    std::vector<double> x;
    double ela0, math0;
  };
  auto draw_school = [&] {
    const double locale = u01(rng);
    const bool urban = locale < 0.22, rural = locale >= 0.46;
    const double poverty = z01(rng);
    const double frpl = clamp(0.42 + 0.16 * poverty + (urban ? 0.15 : 0.0) - (!urban && !rural ? 0.08 : 0.0), 0.02, 0.98);
    const double enrollment = std::round(std::exp(6.1 + 0.45 * z01(rng) + (urban ? 0.35 : 0.0) - (rural ? 0.2 : 0.0)));
    const double ptr = clamp(16.5 + 2.5 * z01(rng) + (urban ? 1.0 : 0.0), 9, 30);
    const double staff = std::round(std::max(5.0, enrollment / ptr * 1.35 + 2 * z01(rng)));
    const double county = std::round(std::exp((urban ? 12.6 : rural ? 10.4 : 11.6) + 0.5 * z01(rng)));
    const double ela = 510 - 45 * (frpl - 0.42) + 12 * z01(rng);
    const double math = 518 - 50 * (frpl - 0.42) + 0.6 * (ela - 510) + 10 * z01(rng);
    const double attendance = clamp(95.6 - 3.0 * (frpl - 0.42) + 0.8 * z01(rng), 85, 99.5);
    const bool title1 = u01(rng) < stats::inv_logit(-1.5 + 5.0 * frpl);
    const bool schoolwide = title1 && u01(rng) < stats::inv_logit(-3.0 + 6.0 * frpl);
    const double male = clamp(0.515 + 0.015 * z01(rng), 0.4, 0.6);
    const double white = clamp((urban ? 0.45 : rural ? 0.93 : 0.8) - 0.25 * (frpl - 0.42) + 0.08 * z01(rng), 0.02, 0.995);
    const double sped = clamp(0.15 + 0.035 * z01(rng), 0.03, 0.4);
    const double lep = clamp((urban ? 0.09 : 0.025) + 0.02 * std::abs(z01(rng)), 0.0, 0.5);
    School s;
    s.x = {ela, math, attendance, staff, enrollment, ptr, county, title1 ? 1.0 : 0.0, schoolwide ? 1.0 : 0.0,
           male, white, sped, frpl, lep, urban ? 1.0 : 0.0, rural ? 1.0 : 0.0};
    s.ela0 = ela + 4 * z01(rng);
    s.math0 = math + 5 * z01(rng);
    return s;
  };

  // Volunteer schools skew larger, less poor and suburban.
  auto selection_score = [&](const School& s) {
    return stats::inv_logit(-3.6 + 0.9 * std::log(s.x[4] / 450.0) - 3.5 * (s.x[12] - 0.42) + 0.025 * (s.x[1] - 518) - 0.4 * s.x[15]);
  };

  std::vector<UnitRecord> units;
  std::size_t sample_seen = 0;
  int treated_left = 27;
  while (sample_seen < n_sample) {
    School s = draw_school();
    if (u01(rng) >= selection_score(s)) continue;
    UnitRecord u;
    u.id = "S" + std::to_string(100 + sample_seen);
    u.covariates = s.x;
    u.membership = Membership::sample;
    const bool treated = u01(rng) < static_cast<double>(treated_left) / static_cast<double>(n_sample - sample_seen);
    if (treated) --treated_left;
    u.treatment = treated ? Arm::treated : Arm::control;
    // Small effects that shrink with poverty.
    const double tau_ela = 3.0 - 4.0 * (s.x[12] - 0.42), tau_math = 2.0 - 2.5 * (s.x[12] - 0.42);
    u.outcomes = {std::round((s.ela0 + (treated ? tau_ela : 0.0)) * 10) / 10,
                  std::round((s.math0 + (treated ? tau_math : 0.0)) * 10) / 10};
    units.push_back(std::move(u));
    ++sample_seen;
  }
  for (std::size_t i = 0; i < n_population; ++i) {
    UnitRecord u;
    u.id = "P" + std::to_string(1000 + i);
    u.covariates = draw_school().x;
    units.push_back(std::move(u));
  }
  for (auto& u : units) {
    for (std::size_t k : {0u, 1u, 2u, 5u}) u.covariates[k] = std::round(u.covariates[k] * 10) / 10;
    for (std::size_t k : {9u, 10u, 11u, 12u, 13u}) u.covariates[k] = std::round(u.covariates[k] * 1000) / 1000;
  }

  const UnitFrame frame(schema, {"ELA", "Math"}, std::move(units));
  std::filesystem::create_directories(dir);
  std::ofstream csv(dir / "indiana_like.csv");
  write_csv(csv, frame);
  std::ofstream js(dir / "indiana_like.schema.json");
  js << schema.to_json().dump(2) << "\n";
  std::cout << "wrote " << (dir / "indiana_like.csv").string() << "\n";
}
