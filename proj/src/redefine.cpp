#include "genpop/redefine.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "genpop/error.hpp"
#include "genpop/stats.hpp"

namespace genpop {

namespace {

void require_coverage(const UnitFrame& frame, const PropensityFit& fit) {
  if (fit.scores.size() != frame.size()) throw Error("propensity fit does not cover the frame");
  for (std::size_t i = 0; i < frame.size(); ++i)
    if (fit.ids[i] != frame[i].id) throw Error("propensity fit ids do not match frame rows");
}

std::vector<double> sample_scores(const UnitFrame& frame, const PropensityFit& fit) {
  std::vector<double> s;
  for (auto r : frame.sample_rows()) s.push_back(fit.scores[r]);
  if (s.empty()) throw Error("frame has no sample units");
  return s;
}

std::vector<bool> keep_scores_in(const UnitFrame& frame, const PropensityFit& fit, double lo, double hi) {
  std::vector<bool> keep(frame.size(), false);
  for (std::size_t r = 0; r < frame.size(); ++r) {
    const double e = fit.scores[r];
    keep[r] = e >= lo && e <= hi;
  }
  return keep;
}

}  // namespace

CrumpCutoff crump_alpha(std::span<const double> population_scores) {
  if (population_scores.empty()) throw Error("crump_alpha: no scores");
  std::vector<double> g;
  g.reserve(population_scores.size());
  for (double e : population_scores) {
    if (!(e > 0 && e < 1)) throw Error("crump_alpha: scores must lie in (0,1)");
    g.push_back(1.0 / (e * (1.0 - e)));
  }
  std::sort(g.begin(), g.end());

  // The retained set is always a prefix of units sorted by g. A prefix of
  // length k is self-consistent when its own threshold 2*mean(g) admits
  // exactly those k units. The largest such threshold gives the smallest alpha.
  double best_gamma = -1;
  double prefix = 0;
  for (std::size_t k = 1; k <= g.size(); ++k) {
    prefix += g[k - 1];
    const double gamma = 2.0 * prefix / static_cast<double>(k);
    const bool admits_last = g[k - 1] <= gamma;
    const bool excludes_next = k == g.size() || g[k] > gamma;
    if (admits_last && excludes_next) best_gamma = std::max(best_gamma, gamma);
  }
  if (best_gamma < 4.0) return {kCrumpFallbackAlpha, false};
  const double alpha = 0.5 - std::sqrt(0.25 - 1.0 / best_gamma);
  if (!(alpha > 0 && alpha <= 0.5)) return {kCrumpFallbackAlpha, false};
  return {alpha, true};
}

Subpopulation trim_crump(const UnitFrame& frame, const PropensityFit& fit, std::optional<double> alpha_override) {
  require_coverage(frame, fit);
  nlohmann::json prov;
  double alpha = 0;
  if (alpha_override) {
    alpha = *alpha_override;
    if (!(alpha >= 0 && alpha <= 0.5)) throw Error("crump: alpha must lie in [0, 0.5]");
    prov = {{"alpha", alpha}, {"source", "override"}};
  } else {
    std::vector<double> pop;
    for (auto r : frame.population_rows()) pop.push_back(fit.scores[r]);
    const auto cut = crump_alpha(pop);
    alpha = cut.alpha;
    prov = {{"alpha", alpha}, {"source", cut.solved ? "solved" : "fallback_0.1"}};
  }
  return Subpopulation::from_mask(frame, RedefinitionMethod::crump, "crump",
                                  keep_scores_in(frame, fit, alpha, 1.0 - alpha), prov);
}

Subpopulation trim_minmax(const UnitFrame& frame, const PropensityFit& fit) {
  require_coverage(frame, fit);
  const auto s = sample_scores(frame, fit);
  const auto [lo, hi] = std::minmax_element(s.begin(), s.end());
  return Subpopulation::from_mask(frame, RedefinitionMethod::ps_minmax, "minmax",
                                  keep_scores_in(frame, fit, *lo, *hi),
                                  {{"min_score", *lo}, {"max_score", *hi}});
}

Subpopulation trim_quantile(const UnitFrame& frame, const PropensityFit& fit, double q) {
  if (!(q >= 50 && q <= 99)) throw Error("quantile trimming: q must lie in [50, 99]");
  require_coverage(frame, fit);
  const double cut = stats::quantile(sample_scores(frame, fit), q / 100.0);
  std::vector<bool> keep(frame.size(), false);
  for (std::size_t r = 0; r < frame.size(); ++r) keep[r] = !(fit.scores[r] > cut);
  std::ostringstream label;
  label.imbue(std::locale::classic());
  label << "quantile:" << q;
  return Subpopulation::from_mask(frame, RedefinitionMethod::ps_quantile, label.str(), keep,
                                  {{"q", q}, {"cut", cut}});
}

Subpopulation trim_covariates(const UnitFrame& frame) {
  const auto sample = frame.sample_rows();
  if (sample.empty()) throw Error("covariate trimming: frame has no sample units");
  const auto& schema = frame.schema();
  std::vector<bool> keep(frame.size(), true);
  nlohmann::json bounds = nlohmann::json::object();
  nlohmann::json levels = nlohmann::json::object();
  for (std::size_t k = 0; k < schema.size(); ++k) {
    double lo = frame[sample.front()].covariates[k], hi = lo;
    for (auto r : sample) {
      lo = std::min(lo, frame[r].covariates[k]);
      hi = std::max(hi, frame[r].covariates[k]);
    }
    if (schema[k].kind == CovariateKind::binary) {
      if (lo != hi) continue;
      levels[schema[k].name] = lo;
    } else {
      bounds[schema[k].name] = {lo, hi};
    }
    for (std::size_t r = 0; r < frame.size(); ++r) {
      const double v = frame[r].covariates[k];
      if (v < lo || v > hi) keep[r] = false;
    }
  }
  return Subpopulation::from_mask(frame, RedefinitionMethod::covariate_range, "covariates", keep,
                                  {{"bounds", bounds}, {"binary_levels", levels}});
}

}  // namespace genpop
