#include "genpop/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "genpop/error.hpp"
#include "genpop/stats.hpp"

namespace genpop {

double silverman_bandwidth(std::span<const double> x) {
  std::vector<double> v(x.begin(), x.end());
  std::sort(v.begin(), v.end());
  if (v.size() < 2 || v.front() == v.back())
    throw Error("bandwidth undefined: fewer than two distinct values");
  const double sd = stats::sd(v);
  const double iqr = stats::quantile_sorted(v, 0.75) - stats::quantile_sorted(v, 0.25);
  double spread = sd;
  if (iqr > 0) spread = std::min(sd, iqr / 1.34);
  const double h = 0.9 * spread * std::pow(static_cast<double>(v.size()), -0.2);
  const double grid_step = 1.0 / static_cast<double>(kDensityGridPoints - 1);
  return std::max(h, grid_step);
}

double trapezoid(std::span<const double> grid, std::span<const double> f) {
  double s = 0;
  for (std::size_t i = 1; i < grid.size(); ++i) s += 0.5 * (f[i] + f[i - 1]) * (grid[i] - grid[i - 1]);
  return s;
}

DensityCurve unit_interval_density(std::span<const double> x) { return unit_interval_density(x, silverman_bandwidth(x)); }

DensityCurve unit_interval_density(std::span<const double> x, double bandwidth) {
  if (x.empty() || !(bandwidth > 0)) throw Error("density: needs values and a positive bandwidth");
  DensityCurve c;
  c.bandwidth = bandwidth;
  const std::size_t m = kDensityGridPoints;
  c.grid.resize(m);
  c.density.assign(m, 0.0);
  for (std::size_t i = 0; i < m; ++i) c.grid[i] = static_cast<double>(i) / static_cast<double>(m - 1);

  std::vector<double> sorted(x.begin(), x.end());
  std::sort(sorted.begin(), sorted.end());
  const double h = c.bandwidth;
  const double reach = 9.0 * h;  // exp(-40.5) is below double resolution of the peak
  const double norm = 1.0 / (static_cast<double>(sorted.size()) * h * std::sqrt(2.0 * std::numbers::pi));
  for (std::size_t i = 0; i < m; ++i) {
    const double g = c.grid[i];
    auto first = std::lower_bound(sorted.begin(), sorted.end(), g - reach);
    auto last = std::upper_bound(first, sorted.end(), g + reach);
    double s = 0;
    for (auto it = first; it != last; ++it) {
      const double u = (g - *it) / h;
      s += std::exp(-0.5 * u * u);
    }
    c.density[i] = s * norm;
  }
  const double mass = trapezoid(c.grid, c.density);
  if (!(mass > 0)) throw Error("density has no mass on [0,1]");
  for (double& d : c.density) d /= mass;
  return c;
}

BIndex b_index_detail(std::span<const double> sample_scores, std::span<const double> population_scores) {
  if (sample_scores.empty() || population_scores.empty()) throw Error("b_index: empty score list");
  const auto fs = unit_interval_density(sample_scores);
  const auto fp = unit_interval_density(population_scores);
  std::vector<double> root(fs.grid.size());
  for (std::size_t i = 0; i < root.size(); ++i) root[i] = std::sqrt(fs.density[i] * fp.density[i]);
  BIndex b;
  b.value = std::clamp(trapezoid(fs.grid, root), 0.0, 1.0);
  b.sample_bandwidth = fs.bandwidth;
  b.population_bandwidth = fp.bandwidth;
  return b;
}

double b_index(std::span<const double> sample_scores, std::span<const double> population_scores) {
  return b_index_detail(sample_scores, population_scores).value;
}

double overlap(std::span<const double> sample_scores, std::span<const double> population_scores) {
  if (sample_scores.empty()) throw Error("overlap: empty sample");
  if (population_scores.empty()) throw Error("overlap: empty population");
  const auto [lo, hi] = std::minmax_element(sample_scores.begin(), sample_scores.end());
  std::size_t inside = 0;
  for (double e : population_scores)
    if (e >= *lo && e <= *hi) ++inside;
  return static_cast<double>(inside) / static_cast<double>(population_scores.size());
}

std::vector<BalanceRow> balance_table(const UnitFrame& frame, const Subpopulation& sub) {
  const auto sample = frame.sample_rows();
  const auto pop = sub.population_rows(frame);
  std::vector<BalanceRow> out;
  for (std::size_t k = 0; k < frame.schema().size(); ++k) {
    std::vector<double> a, b;
    for (auto r : sample) a.push_back(frame[r].covariates[k]);
    for (auto r : pop) b.push_back(frame[r].covariates[k]);
    const double pooled = std::sqrt((stats::variance(a) + stats::variance(b)) / 2.0);
    BalanceRow row{frame.schema()[k].name, 0.0, false};
    if (pooled > 0) {
      row.smd = (stats::mean(a) - stats::mean(b)) / pooled;
    } else {
      row.degenerate = true;
    }
    out.push_back(std::move(row));
  }
  return out;
}

DiagnosticsReport diagnose(const UnitFrame& frame, const Subpopulation& sub, const PropensityFit& fit) {
  std::vector<double> s, p;
  for (auto r : frame.sample_rows()) s.push_back(fit.scores[r]);
  for (auto r : sub.population_rows(frame)) p.push_back(fit.scores[r]);
  DiagnosticsReport d;
  d.subpopulation = sub.label;
  d.n0 = sub.n0;
  auto constant = [](const std::vector<double>& v) { return std::all_of(v.begin(), v.end(), [&](double e) { return e == v.front(); }); };
  if (!s.empty() && !p.empty() && constant(s) && constant(p)) {
    // Two point masses, e.g. an intercept-only model: no bandwidth exists.
    d.b_index = s.front() == p.front() ? 1.0 : 0.0;
    d.point_masses = true;
  } else {
    const auto b = b_index_detail(s, p);
    d.b_index = b.value;
    d.sample_bandwidth = b.sample_bandwidth;
    d.population_bandwidth = b.population_bandwidth;
  }
  d.overlap = overlap(s, p);
  d.balance = balance_table(frame, sub);
  return d;
}

void to_json(nlohmann::json& j, const DiagnosticsReport& r) {
  nlohmann::json bal = nlohmann::json::array();
  for (const auto& row : r.balance)
    bal.push_back({{"covariate", row.covariate}, {"smd", row.smd}, {"degenerate", row.degenerate}});
  j = {{"subpopulation", r.subpopulation},
       {"n0", r.n0},
       {"b_index", r.b_index},
       {"low_generalizability", r.low_generalizability()},
       {"overlap", r.overlap},
       {"bandwidths", {{"sample", r.sample_bandwidth}, {"population", r.population_bandwidth}}},
       {"point_masses", r.point_masses},
       {"kde", {{"kernel", "gaussian"}, {"rule", "silverman"}, {"grid_points", kDensityGridPoints},
                {"integration", "trapezoid"}}},
       {"balance", bal}};
}

}  // namespace genpop
