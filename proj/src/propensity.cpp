#include "genpop/propensity.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "genpop/error.hpp"
#include "genpop/stats.hpp"

namespace genpop {

namespace {

struct Design {
  std::vector<std::size_t> full_index;  // design column -> coefficient slot
  Eigen::MatrixXd matrix;
};

// Standardized feature vector in the full coefficient layout (without intercept).
void features(const LogisticModel& m, std::span<const double> x, std::vector<double>& out) {
  const std::size_t p = m.kinds.size();
  out.assign(p + m.interactions.size(), 0.0);
  for (std::size_t k = 0; k < p; ++k) {
    if (!m.active[k]) continue;
    out[k] = (x[k] - m.standardization[k].mean) / m.standardization[k].sd;
  }
  for (std::size_t i = 0; i < m.interactions.size(); ++i) {
    auto [a, b] = m.interactions[i];
    out[p + i] = out[a] * out[b];
  }
}

Design build_design(const LogisticModel& m, const Eigen::MatrixXd& x) {
  const std::size_t p = m.kinds.size();
  Design d;
  d.full_index.push_back(0);
  for (std::size_t k = 0; k < p; ++k)
    if (m.active[k]) d.full_index.push_back(k + 1);
  for (std::size_t i = 0; i < m.interactions.size(); ++i) d.full_index.push_back(p + 1 + i);

  const Eigen::Index n = x.rows();
  d.matrix.resize(n, static_cast<Eigen::Index>(d.full_index.size()));
  std::vector<double> row(static_cast<std::size_t>(x.cols()));
  std::vector<double> f;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index k = 0; k < x.cols(); ++k) row[static_cast<std::size_t>(k)] = x(i, k);
    features(m, row, f);
    d.matrix(i, 0) = 1.0;
    for (std::size_t c = 1; c < d.full_index.size(); ++c)
      d.matrix(i, static_cast<Eigen::Index>(c)) = f[d.full_index[c] - 1];
  }
  return d;
}

double log1pexp(double eta) { return eta > 0 ? eta + std::log1p(std::exp(-eta)) : std::log1p(std::exp(eta)); }

// Deviance plus ridge term n*lambda*||slopes||^2.
double objective(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const Eigen::VectorXd& beta,
                 double lambda) {
  const Eigen::VectorXd eta = X * beta;
  double dev = 0;
  for (Eigen::Index i = 0; i < eta.size(); ++i) dev += 2.0 * (log1pexp(eta(i)) - y(i) * eta(i));
  if (lambda > 0) dev += static_cast<double>(X.rows()) * lambda * beta.tail(beta.size() - 1).squaredNorm();
  return dev;
}

struct IrlsResult {
  Eigen::VectorXd beta;
  bool converged = false;
  bool separated = false;
  int iterations = 0;
  std::vector<double> trace;
};

IrlsResult irls(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, double lambda,
                const PropensityOptions& opt) {
  const Eigen::Index q = X.cols();
  const double n = static_cast<double>(X.rows());
  IrlsResult r;
  r.beta = Eigen::VectorXd::Zero(q);
  const double ybar = y.mean();
  r.beta(0) = std::log(ybar / (1.0 - ybar));
  double obj = objective(X, y, r.beta, lambda);
  r.trace.push_back(obj);

  Eigen::MatrixXd penalty = Eigen::MatrixXd::Zero(q, q);
  for (Eigen::Index k = 1; k < q; ++k) penalty(k, k) = n * lambda;

  for (int it = 1; it <= opt.max_iterations; ++it) {
    r.iterations = it;
    const Eigen::VectorXd eta = X * r.beta;
    Eigen::VectorXd mu(eta.size()), w(eta.size());
    for (Eigen::Index i = 0; i < eta.size(); ++i) {
      mu(i) = stats::inv_logit(eta(i));
      w(i) = std::max(mu(i) * (1.0 - mu(i)), 1e-300);
    }
    const Eigen::MatrixXd H = X.transpose() * w.asDiagonal() * X + penalty;
    const Eigen::VectorXd g = X.transpose() * (y - mu) - penalty * r.beta;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(H);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) return r;
    Eigen::VectorXd step = ldlt.solve(g);
    if (!step.allFinite()) return r;

    // Step halving keeps the objective non-increasing.
    Eigen::VectorXd candidate = r.beta + step;
    double cand_obj = objective(X, y, candidate, lambda);
    int halvings = 0;
    while (!(cand_obj <= obj + 1e-10) && halvings < 30) {
      step *= 0.5;
      candidate = r.beta + step;
      cand_obj = objective(X, y, candidate, lambda);
      ++halvings;
    }
    if (!(cand_obj <= obj + 1e-10)) {
      // No descent possible along the Newton direction: at the optimum up to rounding.
      r.converged = step.cwiseAbs().maxCoeff() < 1e-6;
      return r;
    }
    r.beta = candidate;
    obj = cand_obj;
    r.trace.push_back(obj);
    if (r.beta.tail(q - 1).size() > 0 && r.beta.tail(q - 1).cwiseAbs().maxCoeff() > opt.separation_bound) {
      r.separated = true;
      return r;
    }
    if (step.cwiseAbs().maxCoeff() < opt.tolerance) {
      r.converged = true;
      return r;
    }
  }
  return r;
}

}  // namespace

double LogisticModel::linear_predictor(std::span<const double> covariates) const {
  if (covariates.size() != kinds.size())
    throw Error("score: expected " + std::to_string(kinds.size()) + " covariates, got " +
                std::to_string(covariates.size()));
  std::vector<double> f;
  features(*this, covariates, f);
  double eta = coefficients(0);
  for (std::size_t j = 0; j < f.size(); ++j) eta += coefficients(static_cast<Eigen::Index>(j + 1)) * f[j];
  return eta;
}

double LogisticModel::score(std::span<const double> covariates) const {
  if (intercept_only) {
    if (covariates.size() != kinds.size())
      throw Error("score: expected " + std::to_string(kinds.size()) + " covariates, got " +
                  std::to_string(covariates.size()));
    return std::clamp(intercept_only_rate, kScoreFloor, kScoreCeiling);
  }
  return std::clamp(stats::inv_logit(linear_predictor(covariates)), kScoreFloor, kScoreCeiling);
}

Eigen::VectorXd LogisticModel::original_scale_coefficients() const {
  if (!interactions.empty()) return {};
  const std::size_t p = kinds.size();
  Eigen::VectorXd out = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(p + 1));
  out(0) = coefficients(0);
  for (std::size_t k = 0; k < p; ++k) {
    const double b = coefficients(static_cast<Eigen::Index>(k + 1));
    out(static_cast<Eigen::Index>(k + 1)) = b / standardization[k].sd;
    out(0) -= b * standardization[k].mean / standardization[k].sd;
  }
  return out;
}

LogisticModel fit_logistic(const Eigen::MatrixXd& x, const Eigen::VectorXd& selected,
                           const std::vector<CovariateKind>& kinds, const PropensityOptions& options) {
  if (static_cast<std::size_t>(x.cols()) != kinds.size()) throw Error("propensity: covariate count mismatch");
  if (x.rows() != selected.size()) throw Error("propensity: membership vector length mismatch");
  const double n_sel = selected.sum();
  if (n_sel <= 0 || n_sel >= static_cast<double>(selected.size()))
    throw Error("propensity: need both sample and population-only units");

  LogisticModel m;
  m.kinds = kinds;
  const std::size_t p = kinds.size();
  m.standardization.resize(p);
  m.active.assign(p, true);
  for (std::size_t k = 0; k < p; ++k) {
    const Eigen::VectorXd col = x.col(static_cast<Eigen::Index>(k));
    const double lo = col.minCoeff(), hi = col.maxCoeff();
    if (lo == hi) {
      m.active[k] = false;
      m.warnings.push_back("dropped constant covariate column " + std::to_string(k));
      continue;
    }
    if (kinds[k] == CovariateKind::continuous) {
      std::vector<double> v(col.data(), col.data() + col.size());
      m.standardization[k] = {stats::mean(v), stats::sd(v)};
    }
  }
  if (options.pairwise_interactions) {
    for (std::size_t a = 0; a < p; ++a)
      for (std::size_t b = a + 1; b < p; ++b)
        if (m.active[a] && m.active[b] && kinds[a] == CovariateKind::continuous &&
            kinds[b] == CovariateKind::continuous)
          m.interactions.emplace_back(a, b);
  }
  const std::size_t full = 1 + p + m.interactions.size();
  m.coefficients = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(full));

  if (std::none_of(m.active.begin(), m.active.end(), [](bool a) { return a; })) {
    m.intercept_only = true;
    m.intercept_only_rate = n_sel / static_cast<double>(selected.size());
    m.coefficients(0) = std::log(n_sel / (static_cast<double>(selected.size()) - n_sel));
    m.converged = true;
    m.deviance = objective(Eigen::MatrixXd::Ones(x.rows(), 1), selected, m.coefficients.head(1), 0);
    m.objective_trace = {m.deviance};
    return m;
  }

  const Design d = build_design(m, x);
  auto accept = [&](const IrlsResult& r, double lambda) {
    for (std::size_t c = 0; c < d.full_index.size(); ++c)
      m.coefficients(static_cast<Eigen::Index>(d.full_index[c])) = r.beta(static_cast<Eigen::Index>(c));
    m.converged = true;
    m.iterations = r.iterations;
    m.objective_trace = r.trace;
    m.ridge_lambda = lambda;
    m.deviance = objective(d.matrix, selected, r.beta, 0);
  };

  IrlsResult r = irls(d.matrix, selected, 0, options);
  if (r.converged && !r.separated) {
    accept(r, 0);
    return m;
  }
  m.warnings.push_back(r.separated ? "separation detected; refitting with ridge penalty"
                                   : "IRLS did not converge; refitting with ridge penalty");
  double lambda = options.ridge_start;
  while (true) {
    r = irls(d.matrix, selected, lambda, options);
    if (r.converged && !r.separated) {
      accept(r, lambda);
      return m;
    }
    if (lambda >= options.ridge_max) break;
    lambda = std::min(lambda * 2, options.ridge_max);
  }
  std::ostringstream msg;
  msg << "propensity model failed to converge (ridge up to " << options.ridge_max
      << "); last iterate:";
  for (Eigen::Index i = 0; i < r.beta.size(); ++i) msg << ' ' << r.beta(i);
  throw Error(msg.str());
}

PropensityFit PropensityFit::from_scores(const UnitFrame& frame, std::vector<double> scores) {
  if (scores.size() != frame.size()) throw Error("score vector does not match frame size");
  PropensityFit f;
  for (const auto& s : frame.schema().specs()) f.covariate_names.push_back(s.name);
  for (const auto& u : frame.units()) f.ids.push_back(u.id);
  for (double& s : scores) {
    if (!(s > 0 && s < 1)) throw Error("propensity scores must lie in (0,1)");
    s = std::clamp(s, kScoreFloor, kScoreCeiling);
  }
  f.scores = std::move(scores);
  f.model.kinds = frame.schema().kinds();
  return f;
}

PropensityFit fit_propensity(const UnitFrame& frame, const PropensityOptions& options) {
  if (frame.sample_count() == 0 || frame.population_count() == 0)
    throw Error("propensity: frame needs both sample and population-only units");
  const Eigen::MatrixXd x = frame.covariate_matrix();
  Eigen::VectorXd sel(static_cast<Eigen::Index>(frame.size()));
  for (std::size_t i = 0; i < frame.size(); ++i) sel(static_cast<Eigen::Index>(i)) = frame.is_sample(i) ? 1.0 : 0.0;

  PropensityFit f;
  f.model = fit_logistic(x, sel, frame.schema().kinds(), options);
  for (std::size_t k = 0; k < frame.schema().size(); ++k) {
    f.covariate_names.push_back(frame.schema()[k].name);
    for (auto& w : f.model.warnings)
      if (w == "dropped constant covariate column " + std::to_string(k))
        w = "dropped constant covariate '" + frame.schema()[k].name + "'";
  }
  f.ids.reserve(frame.size());
  f.scores.reserve(frame.size());
  for (const auto& u : frame.units()) {
    f.ids.push_back(u.id);
    f.scores.push_back(f.model.score(u.covariates));
  }
  return f;
}

double score(const PropensityFit& fit, std::span<const double> covariates) {
  return fit.model.score(covariates);
}

void to_json(nlohmann::json& j, const PropensityFit& fit) {
  const auto& m = fit.model;
  nlohmann::json standardized = nlohmann::json::object();
  nlohmann::json original = nlohmann::json::object();
  nlohmann::json standardization = nlohmann::json::object();
  const Eigen::VectorXd orig = m.coefficients.size() > 0 ? m.original_scale_coefficients() : Eigen::VectorXd();
  if (m.coefficients.size() > 0) {
    standardized["(intercept)"] = m.coefficients(0);
    if (orig.size() > 0) original["(intercept)"] = orig(0);
    for (std::size_t k = 0; k < fit.covariate_names.size() && k < m.kinds.size(); ++k) {
      const auto& name = fit.covariate_names[k];
      standardized[name] = m.coefficients(static_cast<Eigen::Index>(k + 1));
      if (orig.size() > 0) original[name] = orig(static_cast<Eigen::Index>(k + 1));
      standardization[name] = {{"mean", m.standardization[k].mean},
                               {"sd", m.standardization[k].sd},
                               {"active", static_cast<bool>(m.active[k])}};
    }
    for (std::size_t i = 0; i < m.interactions.size(); ++i) {
      auto [a, b] = m.interactions[i];
      standardized[fit.covariate_names[a] + ":" + fit.covariate_names[b]] =
          m.coefficients(static_cast<Eigen::Index>(1 + m.kinds.size() + i));
    }
  }
  nlohmann::json scores = nlohmann::json::object();
  for (std::size_t i = 0; i < fit.ids.size(); ++i) scores[fit.ids[i]] = fit.scores[i];
  j = {{"coefficients_standardized", standardized},
       {"coefficients_original", original},
       {"standardization", standardization},
       {"convergence",
        {{"converged", m.converged},
         {"iterations", m.iterations},
         {"deviance", m.deviance},
         {"ridge_lambda", m.ridge_lambda},
         {"intercept_only", m.intercept_only}}},
       {"warnings", m.warnings},
       {"scores", scores}};
}

}  // namespace genpop
