#include "genpop/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "genpop/error.hpp"
#include "genpop/parallel.hpp"
#include "genpop/random.hpp"
#include "genpop/stats.hpp"

namespace genpop {

std::string_view to_string(EstimatorKind k) {
  switch (k) {
    case EstimatorKind::ipw: return "ipw";
    case EstimatorKind::outcome_model: return "outcome_model";
    case EstimatorKind::tmle: return "tmle";
    case EstimatorKind::eblup: return "eblup";
    case EstimatorKind::bart: return "bart";
  }
  return "unknown";
}

EstimatorKind parse_estimator(std::string_view name) {
  if (name == "ipw") return EstimatorKind::ipw;
  if (name == "outcome_model" || name == "outcome") return EstimatorKind::outcome_model;
  if (name == "tmle") return EstimatorKind::tmle;
  if (name == "eblup") return EstimatorKind::eblup;
  if (name == "bart") return EstimatorKind::bart;
  throw UsageError("unknown estimator '" + std::string(name) + "'");
}

void to_json(nlohmann::json& j, const PateEstimate& e) {
  j = {{"estimator", std::string(to_string(e.estimator))},
       {"outcome", e.outcome},
       {"estimate", e.estimate},
       {"se", e.se ? nlohmann::json(*e.se) : nlohmann::json(nullptr)},
       {"ci95", e.ci95 ? nlohmann::json::array({e.ci95->first, e.ci95->second}) : nlohmann::json(nullptr)},
       {"subpopulation", e.subpopulation},
       {"n0", e.n0},
       {"seed", e.seed},
       {"diagnostics", e.diagnostics}};
}

// ---------------------------------------------------------------------------
// Problem construction

EstimationProblem make_problem(const UnitFrame& frame, const Subpopulation& sub, std::string_view outcome,
                               const PropensityFit* known_scores) {
  const std::size_t o = frame.require_outcome(outcome);
  const auto sample = frame.sample_rows();
  const auto targets = sub.population_rows(frame);
  if (targets.empty()) throw Error("subpopulation has no population units");
  EstimationProblem p;
  p.kinds = frame.schema().kinds();
  p.sample_x = frame.covariate_matrix(sample);
  p.target_x = frame.covariate_matrix(targets);
  p.y.resize(static_cast<Eigen::Index>(sample.size()));
  p.z.resize(static_cast<Eigen::Index>(sample.size()));
  for (std::size_t i = 0; i < sample.size(); ++i) {
    const auto& u = frame[sample[i]];
    p.y(static_cast<Eigen::Index>(i)) = u.outcomes[o];
    p.z(static_cast<Eigen::Index>(i)) = *u.treatment == Arm::treated ? 1.0 : 0.0;
  }
  if (known_scores) {
    if (known_scores->scores.size() != frame.size()) throw Error("propensity fit does not cover the frame");
    p.known_sample_scores.resize(static_cast<Eigen::Index>(sample.size()));
    p.known_target_scores.resize(static_cast<Eigen::Index>(targets.size()));
    for (std::size_t i = 0; i < sample.size(); ++i)
      p.known_sample_scores(static_cast<Eigen::Index>(i)) = known_scores->scores[sample[i]];
    for (std::size_t i = 0; i < targets.size(); ++i)
      p.known_target_scores(static_cast<Eigen::Index>(i)) = known_scores->scores[targets[i]];
  }
  return p;
}

SelectionScores selection_scores(const EstimationProblem& p, const PropensityOptions& options) {
  if (p.has_known_scores()) return {p.known_sample_scores, p.known_target_scores};
  const Eigen::Index n = p.sample_x.rows();
  const Eigen::Index m = p.target_x.rows();
  Eigen::MatrixXd x(n + m, p.sample_x.cols());
  x.topRows(n) = p.sample_x;
  x.bottomRows(m) = p.target_x;
  Eigen::VectorXd sel = Eigen::VectorXd::Zero(n + m);
  sel.head(n).setOnes();
  const LogisticModel model = fit_logistic(x, sel, p.kinds, options);
  SelectionScores s;
  s.sample.resize(n);
  s.target.resize(m);
  std::vector<double> row(static_cast<std::size_t>(x.cols()));
  for (Eigen::Index i = 0; i < n + m; ++i) {
    for (Eigen::Index k = 0; k < x.cols(); ++k) row[static_cast<std::size_t>(k)] = x(i, k);
    (i < n ? s.sample(i) : s.target(i - n)) = model.score(row);
  }
  return s;
}

namespace {

void require_arms(const Eigen::VectorXd& z) {
  const double treated = z.sum();
  if (treated < 1 || treated > static_cast<double>(z.size()) - 1)
    throw Error("estimation needs at least one treated and one control sample unit");
}

}  // namespace

// ---------------------------------------------------------------------------
// IPW

IpwPoint ipw_point(const Eigen::VectorXd& y, const Eigen::VectorXd& z, const Eigen::VectorXd& sample_scores) {
  require_arms(z);
  double sw[2] = {0, 0}, swy[2] = {0, 0}, sww[2] = {0, 0};
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    const double e = sample_scores(i);
    const double w = (1.0 - e) / e;
    const int a = z(i) > 0.5 ? 1 : 0;
    sw[a] += w;
    swy[a] += w * y(i);
    sww[a] += w * w;
  }
  if (!(sw[0] > 0) || !(sw[1] > 0)) throw Error("ipw: an arm has zero total weight");
  IpwPoint out;
  out.estimate = swy[1] / sw[1] - swy[0] / sw[0];
  out.ess_treated = sw[1] * sw[1] / sww[1];
  out.ess_control = sw[0] * sw[0] / sww[0];
  return out;
}

// ---------------------------------------------------------------------------
// Outcome model

Eigen::VectorXd LinearFit::predict(const Eigen::MatrixXd& x) const {
  Eigen::VectorXd out = Eigen::VectorXd::Constant(x.rows(), coefficients(0));
  out += x * coefficients.tail(coefficients.size() - 1);
  return out;
}

LinearFit fit_linear(const Eigen::MatrixXd& x, const Eigen::VectorXd& y) {
  const Eigen::Index n = x.rows();
  const Eigen::Index p = x.cols();
  if (n == 0) throw Error("linear fit: no rows");
  LinearFit fit;
  fit.kept.assign(static_cast<std::size_t>(p), false);

  // Greedy column screening by Gram-Schmidt against the kept columns.
  std::vector<Eigen::VectorXd> basis;
  std::vector<Eigen::Index> kept_cols;
  auto try_add = [&](const Eigen::VectorXd& col) {
    const double norm = col.norm();
    if (!(norm > 0)) return false;
    Eigen::VectorXd r = col;
    for (int pass = 0; pass < 2; ++pass)
      for (const auto& q : basis) r -= q.dot(r) * q;
    if (r.norm() <= 1e-9 * norm) return false;
    basis.push_back(r / r.norm());
    return true;
  };
  try_add(Eigen::VectorXd::Ones(n));
  for (Eigen::Index k = 0; k < p; ++k) {
    if (static_cast<Eigen::Index>(basis.size()) >= n) break;
    if (try_add(x.col(k))) {
      kept_cols.push_back(k);
      fit.kept[static_cast<std::size_t>(k)] = true;
    }
  }
  for (Eigen::Index k = 0; k < p; ++k)
    if (!fit.kept[static_cast<std::size_t>(k)])
      fit.warnings.push_back("dropped collinear column " + std::to_string(k));
  if (p > 0 && kept_cols.empty()) throw Error("linear fit: every covariate column is collinear with the intercept");

  Eigen::MatrixXd design(n, static_cast<Eigen::Index>(kept_cols.size()) + 1);
  design.col(0).setOnes();
  for (std::size_t c = 0; c < kept_cols.size(); ++c) design.col(static_cast<Eigen::Index>(c) + 1) = x.col(kept_cols[c]);
  const Eigen::VectorXd beta = design.colPivHouseholderQr().solve(y);

  fit.coefficients = Eigen::VectorXd::Zero(p + 1);
  fit.coefficients(0) = beta(0);
  for (std::size_t c = 0; c < kept_cols.size(); ++c) fit.coefficients(kept_cols[c] + 1) = beta(static_cast<Eigen::Index>(c) + 1);
  return fit;
}

namespace {

LinearFit fit_arm(const EstimationProblem& p, bool treated) {
  std::vector<Eigen::Index> rows;
  for (Eigen::Index i = 0; i < p.z.size(); ++i)
    if ((p.z(i) > 0.5) == treated) rows.push_back(i);
  Eigen::MatrixXd x(static_cast<Eigen::Index>(rows.size()), p.sample_x.cols());
  Eigen::VectorXd y(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    x.row(static_cast<Eigen::Index>(r)) = p.sample_x.row(rows[r]);
    y(static_cast<Eigen::Index>(r)) = p.y(rows[r]);
  }
  LinearFit fit = fit_linear(x, y);
  if (std::none_of(fit.kept.begin(), fit.kept.end(), [](bool k) { return k; }))
    throw Error(std::string("outcome model: only the intercept remains in the ") +
                (treated ? "treated" : "control") + " arm");
  return fit;
}

}  // namespace

OutcomeModelPoint outcome_model_point(const EstimationProblem& p) {
  require_arms(p.z);
  if (p.sample_x.rows() <= p.sample_x.cols() + 2)
    throw Error("outcome model: sample size must exceed the number of covariates + 2");
  OutcomeModelPoint out;
  out.treated = fit_arm(p, true);
  out.control = fit_arm(p, false);
  out.target_mu1 = out.treated.predict(p.target_x);
  out.target_mu0 = out.control.predict(p.target_x);
  out.estimate = (out.target_mu1 - out.target_mu0).mean();
  const Eigen::VectorXd f1 = out.treated.predict(p.sample_x);
  const Eigen::VectorXd f0 = out.control.predict(p.sample_x);
  out.sample_fitted.resize(p.z.size());
  for (Eigen::Index i = 0; i < p.z.size(); ++i) out.sample_fitted(i) = p.z(i) > 0.5 ? f1(i) : f0(i);
  return out;
}

// ---------------------------------------------------------------------------
// TMLE

TmlePoint tmle_point(const EstimationProblem& p, const SelectionScores& scores) {
  const OutcomeModelPoint q0 = outcome_model_point(p);
  double h1r = 0, h1h1 = 0, h0r = 0, h0h0 = 0;
  for (Eigen::Index i = 0; i < p.z.size(); ++i) {
    const double e = scores.sample(i);
    const double odds = (1.0 - e) / e;
    const double r = p.y(i) - q0.sample_fitted(i);
    if (p.z(i) > 0.5) {
      h1r += odds * r;
      h1h1 += odds * odds;
    } else {
      h0r += odds * r;
      h0h0 += odds * odds;
    }
  }
  if (!(h1h1 > 0) || !(h0h0 > 0)) throw Error("tmle: degenerate fluctuation design");
  TmlePoint out;
  out.initial = q0.estimate;
  out.epsilon_treated = h1r / h1h1;
  out.epsilon_control = h0r / h0h0;
  double diff = 0;
  for (Eigen::Index j = 0; j < p.target_x.rows(); ++j) {
    const double e = scores.target(j);
    const double odds = (1.0 - e) / e;
    const double q1 = q0.target_mu1(j) + out.epsilon_treated * odds;
    const double q0v = q0.target_mu0(j) + out.epsilon_control * odds;
    diff += q1 - q0v;
  }
  out.estimate = diff / static_cast<double>(p.target_x.rows());
  for (Eigen::Index i = 0; i < p.z.size(); ++i) {
    const double e = scores.sample(i);
    const double odds = (1.0 - e) / e;
    if (p.z(i) > 0.5) {
      out.equation_treated += odds * (p.y(i) - q0.sample_fitted(i) - out.epsilon_treated * odds);
    } else {
      out.equation_control += odds * (p.y(i) - q0.sample_fitted(i) - out.epsilon_control * odds);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Bootstrap

namespace {

double point_estimate(EstimatorKind kind, const EstimationProblem& p, const SelectionScores* scores) {
  switch (kind) {
    case EstimatorKind::ipw: return ipw_point(p.y, p.z, scores->sample).estimate;
    case EstimatorKind::outcome_model: return outcome_model_point(p).estimate;
    case EstimatorKind::tmle: return tmle_point(p, *scores).estimate;
    case EstimatorKind::eblup: return eblup_point(p, *scores).estimate;
    case EstimatorKind::bart: break;
  }
  throw Error("bootstrap does not apply to bart");
}

bool needs_scores(EstimatorKind k) { return k != EstimatorKind::outcome_model; }

EstimationProblem resample(const EstimationProblem& p, Rng& rng) {
  std::vector<Eigen::Index> arm[2];
  for (Eigen::Index i = 0; i < p.z.size(); ++i) arm[p.z(i) > 0.5 ? 1 : 0].push_back(i);
  EstimationProblem r;
  r.kinds = p.kinds;
  r.target_x = p.target_x;
  const Eigen::Index n = p.z.size();
  r.sample_x.resize(n, p.sample_x.cols());
  r.y.resize(n);
  r.z.resize(n);
  if (p.has_known_scores()) {
    r.known_sample_scores.resize(n);
    r.known_target_scores = p.known_target_scores;
  }
  Eigen::Index out = 0;
  for (int a = 0; a < 2; ++a) {
    std::uniform_int_distribution<std::size_t> pick(0, arm[a].size() - 1);
    for (std::size_t k = 0; k < arm[a].size(); ++k) {
      const Eigen::Index src = arm[a][pick(rng)];
      r.sample_x.row(out) = p.sample_x.row(src);
      r.y(out) = p.y(src);
      r.z(out) = p.z(src);
      if (p.has_known_scores()) r.known_sample_scores(out) = p.known_sample_scores(src);
      ++out;
    }
  }
  return r;
}

}  // namespace

std::vector<BootstrapResult> bootstrap_many(const std::vector<EstimatorKind>& kinds, const EstimationProblem& p,
                                            int replicates, std::uint64_t seed, const PropensityOptions& options) {
  if (replicates < 50) throw Error("bootstrap needs at least 50 replicates");
  for (auto k : kinds)
    if (k == EstimatorKind::bart) throw Error("bootstrap does not apply to bart");
  require_arms(p.z);
  const bool any_scores = std::any_of(kinds.begin(), kinds.end(), needs_scores);

  const auto B = static_cast<std::size_t>(replicates);
  // values[r][k]; NaN marks a failure, with its message in errors[r][k].
  std::vector<std::vector<double>> values(B, std::vector<double>(kinds.size(), 0.0));
  std::vector<std::vector<std::string>> errors(B, std::vector<std::string>(kinds.size()));
  parallel_for(B, [&](std::size_t r) {
    Rng rng = make_rng(derive_seed(seed, r));
    const EstimationProblem rep = resample(p, rng);
    std::optional<SelectionScores> scores;
    std::string score_error;
    if (any_scores) {
      try {
        scores = selection_scores(rep, options);
      } catch (const std::exception& e) {
        score_error = std::string("propensity refit: ") + e.what();
      }
    }
    for (std::size_t k = 0; k < kinds.size(); ++k) {
      if (needs_scores(kinds[k]) && !scores) {
        values[r][k] = std::nan("");
        errors[r][k] = score_error;
        continue;
      }
      try {
        values[r][k] = point_estimate(kinds[k], rep, scores ? &*scores : nullptr);
        if (!std::isfinite(values[r][k])) {
          values[r][k] = std::nan("");
          errors[r][k] = "non-finite estimate";
        }
      } catch (const std::exception& e) {
        values[r][k] = std::nan("");
        errors[r][k] = e.what();
      }
    }
  });

  std::vector<BootstrapResult> out(kinds.size());
  for (std::size_t k = 0; k < kinds.size(); ++k) {
    BootstrapResult& res = out[k];
    for (std::size_t r = 0; r < B; ++r) {
      if (std::isnan(values[r][k])) {
        ++res.failed;
        ++res.failure_census[errors[r][k]];
      } else {
        ++res.succeeded;
        res.replicates.push_back(values[r][k]);
      }
    }
    if (static_cast<double>(res.failed) > 0.2 * static_cast<double>(B)) {
      std::string msg = std::string("bootstrap (") + std::string(to_string(kinds[k])) + "): " +
                        std::to_string(res.failed) + " of " + std::to_string(B) + " replicates failed;";
      for (const auto& [why, count] : res.failure_census) msg += " [" + std::to_string(count) + "x] " + why + ";";
      throw Error(msg);
    }
    res.se = stats::sd(res.replicates);
    res.ci95 = {stats::quantile(res.replicates, 0.025), stats::quantile(res.replicates, 0.975)};
  }
  return out;
}

BootstrapResult bootstrap_se(EstimatorKind kind, const EstimationProblem& p, int replicates, std::uint64_t seed,
                             const PropensityOptions& options) {
  return bootstrap_many({kind}, p, replicates, seed, options).front();
}

BootstrapResult bootstrap_se(EstimatorKind kind, const UnitFrame& frame, const Subpopulation& sub,
                             std::string_view outcome, int replicates, std::uint64_t seed) {
  return bootstrap_se(kind, make_problem(frame, sub, outcome), replicates, seed);
}

// ---------------------------------------------------------------------------
// Frame-level wrappers

namespace {

PateEstimate blank(EstimatorKind kind, const Subpopulation& sub, std::string_view outcome, std::uint64_t seed) {
  PateEstimate e;
  e.estimator = kind;
  e.outcome = std::string(outcome);
  e.subpopulation = sub.label;
  e.n0 = sub.n0;
  e.seed = seed;
  return e;
}

void attach_interval(PateEstimate& e, double se, std::pair<double, double> ci) {
  e.se = se;
  // Percentile limits can miss a skewed point estimate; the reported interval always covers it.
  e.ci95 = std::make_pair(std::min(ci.first, e.estimate), std::max(ci.second, e.estimate));
}

}  // namespace

std::vector<PateEstimate> estimate_many(const std::vector<EstimatorKind>& kinds, const UnitFrame& frame,
                                        const Subpopulation& sub, const PropensityFit& fit,
                                        std::string_view outcome, const EstimateOptions& options) {
  frame.require_estimable();
  if (options.bootstrap_b != 0 && options.bootstrap_b < 50) throw Error("bootstrap needs at least 50 replicates");
  const EstimationProblem p = make_problem(frame, sub, outcome, options.refit_propensity ? nullptr : &fit);
  const bool any_scores = std::any_of(kinds.begin(), kinds.end(), needs_scores);
  std::optional<SelectionScores> scores;
  if (any_scores) {
    try {
      scores = selection_scores(p, options.propensity);
    } catch (const Error& e) {
      throw Error(std::string("propensity refit failed: ") + e.what());
    }
  }

  std::vector<PateEstimate> out;
  for (auto kind : kinds) {
    PateEstimate e = blank(kind, sub, outcome, options.seed);
    switch (kind) {
      case EstimatorKind::ipw: {
        const IpwPoint ip = ipw_point(p.y, p.z, scores->sample);
        e.estimate = ip.estimate;
        e.diagnostics = {{"ess_treated", ip.ess_treated}, {"ess_control", ip.ess_control}};
        break;
      }
      case EstimatorKind::outcome_model: {
        const OutcomeModelPoint om = outcome_model_point(p);
        e.estimate = om.estimate;
        std::vector<std::string> warnings = om.treated.warnings;
        for (const auto& w : om.control.warnings) warnings.push_back(w);
        e.diagnostics = {{"warnings", warnings}};
        break;
      }
      case EstimatorKind::tmle: {
        const TmlePoint tp = tmle_point(p, *scores);
        e.estimate = tp.estimate;
        e.diagnostics = {{"initial", tp.initial},
                         {"epsilon_treated", tp.epsilon_treated},
                         {"epsilon_control", tp.epsilon_control},
                         {"equation_treated", tp.equation_treated},
                         {"equation_control", tp.equation_control}};
        break;
      }
      case EstimatorKind::eblup: {
        const EblupPoint ep = eblup_point(p, *scores);
        e.estimate = ep.estimate;
        nlohmann::json strata = nlohmann::json::array();
        for (const auto& s : ep.strata)
          strata.push_back({{"n_population", s.n_population},
                            {"n_treated", s.n_treated},
                            {"n_control", s.n_control},
                            {"direct", s.direct ? nlohmann::json(*s.direct) : nlohmann::json(nullptr)},
                            {"sampling_variance", s.sampling_variance},
                            {"synthetic", s.synthetic},
                            {"eblup", s.eblup}});
        e.diagnostics = {{"between_variance", ep.between_variance},
                         {"synthetic_only", ep.synthetic_only},
                         {"strata", strata}};
        break;
      }
      case EstimatorKind::bart:
        throw Error("estimate_many: use estimate_bart for bart");
    }
    out.push_back(std::move(e));
  }

  if (options.bootstrap_b > 0) {
    const auto boot = bootstrap_many(kinds, p, options.bootstrap_b, options.seed, options.propensity);
    for (std::size_t k = 0; k < kinds.size(); ++k) {
      attach_interval(out[k], boot[k].se, boot[k].ci95);
      out[k].diagnostics["bootstrap"] = {{"replicates", options.bootstrap_b},
                                         {"failed", boot[k].failed}};
    }
  }
  return out;
}

std::vector<PateEstimate> estimate_bart_many(const UnitFrame& frame, const std::vector<Subpopulation>& subs,
                                             std::string_view outcome, const EstimateOptions& options) {
  frame.require_estimable();
  if (subs.empty()) return {};
  const EstimationProblem first = make_problem(frame, subs.front(), outcome);
  if (first.sample_x.rows() <= first.sample_x.cols() + 2)
    throw Error("bart: sample size must exceed the number of covariates + 2");
  // Every target set is a subset of the population-only rows.
  const std::vector<std::size_t> pop_rows = frame.population_rows();
  std::vector<std::size_t> position(frame.size(), 0);
  for (std::size_t i = 0; i < pop_rows.size(); ++i) position[pop_rows[i]] = i;
  std::vector<std::vector<std::size_t>> sets;
  for (const auto& s : subs) {
    std::vector<std::size_t> idx;
    for (auto r : s.population_rows(frame)) idx.push_back(position[r]);
    sets.push_back(std::move(idx));
  }
  const BartPosterior post = bart_average_effects(first.sample_x, first.z, first.y, frame.covariate_matrix(pop_rows),
                                                  sets, options.bart, options.seed);

  std::vector<PateEstimate> out;
  for (std::size_t s = 0; s < subs.size(); ++s) {
    PateEstimate e = blank(EstimatorKind::bart, subs[s], outcome, options.seed);
    const auto& draws = post.average_effects[s];
    e.estimate = stats::mean(draws);
    attach_interval(e, stats::sd(draws), {stats::quantile(draws, 0.025), stats::quantile(draws, 0.975)});
    e.diagnostics = {{"posterior_draws", draws.size()},
                     {"acceptance_rate", post.acceptance_rate},
                     {"sweeps_without_acceptance", post.sweeps_without_acceptance},
                     {"config", options.bart},
                     {"warnings", post.warnings}};
    out.push_back(std::move(e));
  }
  return out;
}

PateEstimate estimate_ipw(const UnitFrame& frame, const Subpopulation& sub, const PropensityFit& fit,
                          std::string_view outcome, const EstimateOptions& options) {
  return estimate_many({EstimatorKind::ipw}, frame, sub, fit, outcome, options).front();
}

PateEstimate estimate_outcome_model(const UnitFrame& frame, const Subpopulation& sub, std::string_view outcome,
                                    const EstimateOptions& options) {
  EstimateOptions o = options;
  o.refit_propensity = true;  // no scores involved
  PropensityFit none;
  return estimate_many({EstimatorKind::outcome_model}, frame, sub, none, outcome, o).front();
}

PateEstimate estimate_tmle(const UnitFrame& frame, const Subpopulation& sub, const PropensityFit& fit,
                           std::string_view outcome, const EstimateOptions& options) {
  return estimate_many({EstimatorKind::tmle}, frame, sub, fit, outcome, options).front();
}

PateEstimate estimate_eblup(const UnitFrame& frame, const Subpopulation& sub, const PropensityFit& fit,
                            std::string_view outcome, const EstimateOptions& options) {
  return estimate_many({EstimatorKind::eblup}, frame, sub, fit, outcome, options).front();
}

PateEstimate estimate_bart(const UnitFrame& frame, const Subpopulation& sub, std::string_view outcome,
                           const EstimateOptions& options) {
  return estimate_bart_many(frame, {sub}, outcome, options).front();
}

PateEstimate estimate(EstimatorKind kind, const UnitFrame& frame, const Subpopulation& sub,
                      const PropensityFit& fit, std::string_view outcome, const EstimateOptions& options) {
  if (kind == EstimatorKind::bart) return estimate_bart(frame, sub, outcome, options);
  return estimate_many({kind}, frame, sub, fit, outcome, options).front();
}

}  // namespace genpop
