#include <algorithm>
#include <cmath>
#include <limits>

#include "genpop/error.hpp"
#include "genpop/estimators.hpp"
#include "genpop/stats.hpp"

namespace genpop {

namespace {

struct GlsSolution {
  Eigen::VectorXd beta;
  double restricted_loglik = -std::numeric_limits<double>::infinity();
};

GlsSolution gls(const Eigen::VectorXd& d, const Eigen::VectorXd& psi, const Eigen::MatrixXd& X, double A) {
  GlsSolution s;
  const Eigen::VectorXd v = (psi.array() + A).matrix();
  if ((v.array() <= 0).any()) return s;
  const Eigen::VectorXd vinv = v.cwiseInverse();
  const Eigen::MatrixXd xtvx = X.transpose() * vinv.asDiagonal() * X;
  Eigen::LDLT<Eigen::MatrixXd> ldlt(xtvx);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) return s;
  s.beta = ldlt.solve(X.transpose() * vinv.asDiagonal() * d);
  const Eigen::VectorXd r = d - X * s.beta;
  const double logdet = ldlt.vectorD().array().log().sum();
  s.restricted_loglik = -0.5 * (v.array().log().sum() + logdet + r.dot(vinv.asDiagonal() * r));
  return s;
}

}  // namespace

FayHerriotFit fay_herriot_at(const Eigen::VectorXd& direct, const Eigen::VectorXd& sampling_variance,
                             const Eigen::MatrixXd& design, double A) {
  const GlsSolution s = gls(direct, sampling_variance, design, A);
  if (s.beta.size() == 0) throw Error("fay-herriot: singular design");
  FayHerriotFit f;
  f.between_variance = A;
  f.beta = s.beta;
  f.synthetic = design * s.beta;
  const Eigen::Index m = direct.size();
  f.shrinkage.resize(m);
  f.eblup.resize(m);
  for (Eigen::Index j = 0; j < m; ++j) {
    const double denom = A + sampling_variance(j);
    f.shrinkage(j) = denom > 0 ? A / denom : 1.0;
    f.eblup(j) = f.shrinkage(j) * direct(j) + (1.0 - f.shrinkage(j)) * f.synthetic(j);
  }
  return f;
}

FayHerriotFit fay_herriot_reml(const Eigen::VectorXd& direct, const Eigen::VectorXd& sampling_variance,
                               const Eigen::MatrixXd& design) {
  const Eigen::Index m = direct.size();
  if (m == 0 || design.rows() != m || sampling_variance.size() != m)
    throw Error("fay-herriot: dimension mismatch");
  if (m <= design.cols()) return fay_herriot_at(direct, sampling_variance, design, 0.0);

  // REML over A >= 0: log-spaced grid, then golden-section refinement.
  const double mean_d = direct.mean();
  const double var_d = (direct.array() - mean_d).square().sum() / static_cast<double>(std::max<Eigen::Index>(1, m - 1));
  const double scale = std::max({var_d, sampling_variance.mean(), 1e-12});
  const bool zero_allowed = sampling_variance.minCoeff() > 0;

  std::vector<double> grid;
  if (zero_allowed) grid.push_back(0.0);
  for (int k = 0; k <= 240; ++k) grid.push_back(scale * std::pow(10.0, -8.0 + 11.0 * k / 240.0));
  std::size_t best = 0;
  double best_ll = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double ll = gls(direct, sampling_variance, design, grid[i]).restricted_loglik;
    if (ll > best_ll) {
      best_ll = ll;
      best = i;
    }
  }
  if (!std::isfinite(best_ll)) throw Error("fay-herriot: REML likelihood not finite");
  double A = grid[best];
  if (!(zero_allowed && best == 0)) {
    double lo = grid[best > 0 ? best - 1 : 0];
    double hi = grid[std::min(best + 1, grid.size() - 1)];
    const double phi = 0.5 * (std::sqrt(5.0) - 1.0);
    auto f = [&](double a) { return gls(direct, sampling_variance, design, a).restricted_loglik; };
    double c = hi - phi * (hi - lo), d = lo + phi * (hi - lo);
    double fc = f(c), fd = f(d);
    for (int it = 0; it < 100 && hi - lo > 1e-12 * std::max(1.0, hi); ++it) {
      if (fc > fd) {
        hi = d;
        d = c;
        fd = fc;
        c = hi - phi * (hi - lo);
        fc = f(c);
      } else {
        lo = c;
        c = d;
        fc = fd;
        d = lo + phi * (hi - lo);
        fd = f(d);
      }
    }
    const double refined = 0.5 * (lo + hi);
    if (f(refined) >= best_ll) A = refined;
  }
  return fay_herriot_at(direct, sampling_variance, design, A);
}

EblupPoint eblup_point(const EstimationProblem& p, const SelectionScores& scores) {
  const Eigen::Index n = p.z.size();
  const Eigen::Index nt = p.target_x.rows();
  if (nt == 0) throw Error("eblup: no population units");

  std::vector<double> target_scores(scores.target.data(), scores.target.data() + nt);
  std::sort(target_scores.begin(), target_scores.end());
  std::vector<double> cuts;
  for (int k = 1; k < kEblupStrata; ++k)
    cuts.push_back(stats::quantile_sorted(target_scores, static_cast<double>(k) / kEblupStrata));
  auto stratum_of = [&](double e) {
    int j = 0;
    for (double c : cuts)
      if (e > c) ++j;
    return j;
  };
  auto logit = [](double e) { return std::log(e / (1.0 - e)); };

  EblupPoint out;
  out.strata.resize(kEblupStrata);
  std::vector<double> logit_sum(kEblupStrata, 0.0), unit_count(kEblupStrata, 0.0);
  std::vector<double> sum_y[2] = {std::vector<double>(kEblupStrata, 0.0), std::vector<double>(kEblupStrata, 0.0)};
  for (Eigen::Index j = 0; j < nt; ++j) {
    const int s = stratum_of(scores.target(j));
    ++out.strata[static_cast<std::size_t>(s)].n_population;
    logit_sum[static_cast<std::size_t>(s)] += logit(scores.target(j));
    unit_count[static_cast<std::size_t>(s)] += 1;
  }
  std::vector<double> arm_y[2];
  for (Eigen::Index i = 0; i < n; ++i) {
    const int s = stratum_of(scores.sample(i));
    const int a = p.z(i) > 0.5 ? 1 : 0;
    auto& st = out.strata[static_cast<std::size_t>(s)];
    (a ? st.n_treated : st.n_control) += 1;
    sum_y[a][static_cast<std::size_t>(s)] += p.y(i);
    logit_sum[static_cast<std::size_t>(s)] += logit(scores.sample(i));
    unit_count[static_cast<std::size_t>(s)] += 1;
    arm_y[a].push_back(p.y(i));
  }
  if (arm_y[0].empty() || arm_y[1].empty())
    throw Error("estimation needs at least one treated and one control sample unit");

  // Pooled within-arm variance of the whole sample sets every stratum's sampling variance.
  const double df = static_cast<double>(arm_y[0].size() + arm_y[1].size()) - 2.0;
  const double pooled =
      df > 0 ? ((static_cast<double>(arm_y[0].size()) - 1) * stats::variance(arm_y[0]) +
                (static_cast<double>(arm_y[1].size()) - 1) * stats::variance(arm_y[1])) / df
             : 0.0;

  std::vector<std::size_t> areas;
  for (std::size_t s = 0; s < out.strata.size(); ++s) {
    auto& st = out.strata[s];
    if (st.n_treated > 0 && st.n_control > 0) {
      st.direct = sum_y[1][s] / static_cast<double>(st.n_treated) - sum_y[0][s] / static_cast<double>(st.n_control);
      st.sampling_variance = pooled * (1.0 / static_cast<double>(st.n_treated) + 1.0 / static_cast<double>(st.n_control));
      areas.push_back(s);
    }
  }
  if (areas.empty()) throw Error("eblup: no stratum has both treated and control sample units");

  const bool with_slope = areas.size() >= 4;
  auto design_row = [&](std::size_t s) {
    Eigen::RowVectorXd r(with_slope ? 2 : 1);
    r(0) = 1.0;
    if (with_slope) r(1) = unit_count[s] > 0 ? logit_sum[s] / unit_count[s] : 0.0;
    return r;
  };
  const auto m = static_cast<Eigen::Index>(areas.size());
  Eigen::VectorXd d(m), psi(m);
  Eigen::MatrixXd X(m, with_slope ? 2 : 1);
  for (Eigen::Index k = 0; k < m; ++k) {
    const auto& st = out.strata[areas[static_cast<std::size_t>(k)]];
    d(k) = *st.direct;
    psi(k) = st.sampling_variance;
    X.row(k) = design_row(areas[static_cast<std::size_t>(k)]);
  }

  FayHerriotFit fh;
  if (areas.size() < 2) {
    out.synthetic_only = true;
    fh = fay_herriot_at(d, psi, X, 0.0);
  } else {
    fh = fay_herriot_reml(d, psi, X);
  }
  out.between_variance = fh.between_variance;

  std::size_t k = 0;
  double weighted = 0, total = 0;
  for (std::size_t s = 0; s < out.strata.size(); ++s) {
    auto& st = out.strata[s];
    if (unit_count[s] == 0) continue;
    st.synthetic = (design_row(s) * fh.beta)(0);
    if (k < areas.size() && areas[k] == s) {
      st.eblup = out.synthetic_only ? st.synthetic : fh.eblup(static_cast<Eigen::Index>(k));
      ++k;
    } else {
      st.eblup = st.synthetic;
    }
    weighted += static_cast<double>(st.n_population) * st.eblup;
    total += static_cast<double>(st.n_population);
  }
  out.estimate = weighted / total;
  return out;
}

}  // namespace genpop
