#include "genpop/simlab.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <set>
#include <random>
#include <sstream>

#include "genpop/diagnostics.hpp"
#include "genpop/error.hpp"
#include "genpop/parallel.hpp"
#include "genpop/random.hpp"
#include "genpop/redefine.hpp"
#include "genpop/stats.hpp"

namespace genpop {

// ---------------------------------------------------------------------------
// Config

SimConfig SimConfig::defaults() {
  SimConfig c;
  //                         b0   x1    x2   x3   x4  x5 x6 x7 x8 x9 x10  b1    b2  b3 b4
  c.selection_coefficients = {0, 0.4, -0.3, 0.3, 0.2, 0, 0, 0, 0, 0, 0, 0.3, -0.2, 0, 0};
  c.outcome_coefficients = {0, 0.5, 0.3, -0.3, 0.2, 0, 0, 0, 0, 0, 0, 0.3, 0, 0, 0};
  c.effect_slopes = {0.25, 0.15, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0};
  c.tau0 = 0.5;
  return c;
}

namespace {

[[noreturn]] void field_error(const std::string& path, const std::string& what) {
  throw UsageError("config " + path + ": " + what);
}

template <typename T>
T get_field(const nlohmann::json& j, const std::string& key, T fallback);

template <>
double get_field(const nlohmann::json& j, const std::string& key, double fallback) {
  if (!j.contains(key)) return fallback;
  if (!j[key].is_number()) field_error("/" + key, "expected a number");
  return j[key].get<double>();
}

std::uint64_t get_unsigned(const nlohmann::json& j, const std::string& key, std::uint64_t fallback) {
  if (!j.contains(key)) return fallback;
  const auto& v = j[key];
  if (v.is_number_unsigned()) return v.get<std::uint64_t>();
  if (v.is_number_integer() && v.get<std::int64_t>() >= 0) return static_cast<std::uint64_t>(v.get<std::int64_t>());
  field_error("/" + key, "expected a non-negative integer");
}

std::vector<double> get_vector(const nlohmann::json& j, const std::string& key, std::vector<double> fallback) {
  if (!j.contains(key)) return fallback;
  if (!j[key].is_array()) field_error("/" + key, "expected an array of numbers");
  std::vector<double> out;
  for (std::size_t i = 0; i < j[key].size(); ++i) {
    if (!j[key][i].is_number()) field_error("/" + key + "/" + std::to_string(i), "expected a number");
    out.push_back(j[key][i].get<double>());
  }
  return out;
}

std::vector<std::string> get_strings(const nlohmann::json& j, const std::string& key,
                                     std::vector<std::string> fallback) {
  if (!j.contains(key)) return fallback;
  if (!j[key].is_array()) field_error("/" + key, "expected an array of strings");
  std::vector<std::string> out;
  for (std::size_t i = 0; i < j[key].size(); ++i) {
    if (!j[key][i].is_string()) field_error("/" + key + "/" + std::to_string(i), "expected a string");
    out.push_back(j[key][i].get<std::string>());
  }
  return out;
}

}  // namespace

SimConfig SimConfig::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw UsageError("config: expected a JSON object");
  static const std::set<std::string> known{"population_size", "sample_size", "covariate_count", "binary_count",
                                           "binary_rate", "selection_coefficients", "outcome_coefficients",
                                           "effect_model", "tau0", "effect_slopes", "noise_sd", "replications",
                                           "seed", "allow_large_sample", "methods", "policy", "estimators",
                                           "bootstrap_b", "bart"};
  for (const auto& [key, _] : j.items())
    if (!known.count(key)) field_error("/" + key, "unknown field");

  SimConfig c = defaults();
  const bool custom_shape = j.contains("covariate_count") || j.contains("binary_count");
  c.population_size = get_unsigned(j, "population_size", c.population_size);
  c.sample_size = get_unsigned(j, "sample_size", c.sample_size);
  c.covariate_count = get_unsigned(j, "covariate_count", c.covariate_count);
  c.binary_count = get_unsigned(j, "binary_count", c.binary_count);
  if (custom_shape) {
    c.selection_coefficients.assign(c.covariate_count + 1, 0.0);
    c.outcome_coefficients.assign(c.covariate_count + 1, 0.0);
    c.effect_slopes.assign(c.covariate_count, 0.0);
  }
  c.binary_rate = get_field(j, "binary_rate", c.binary_rate);
  c.selection_coefficients = get_vector(j, "selection_coefficients", c.selection_coefficients);
  c.outcome_coefficients = get_vector(j, "outcome_coefficients", c.outcome_coefficients);
  c.effect_slopes = get_vector(j, "effect_slopes", c.effect_slopes);
  if (j.contains("effect_model")) {
    if (!j["effect_model"].is_string()) field_error("/effect_model", "expected \"constant\" or \"linear\"");
    const auto m = j["effect_model"].get<std::string>();
    if (m == "constant") {
      c.effect_model = EffectModel::constant;
    } else if (m == "linear") {
      c.effect_model = EffectModel::linear;
    } else {
      field_error("/effect_model", "expected \"constant\" or \"linear\"");
    }
  }
  c.tau0 = get_field(j, "tau0", c.tau0);
  c.noise_sd = get_field(j, "noise_sd", c.noise_sd);
  if (j.contains("replications")) {
    if (!j["replications"].is_number_integer()) field_error("/replications", "expected an integer");
    c.replications = j["replications"].get<int>();
  }
  c.seed = get_unsigned(j, "seed", c.seed);
  if (j.contains("allow_large_sample")) {
    if (!j["allow_large_sample"].is_boolean()) field_error("/allow_large_sample", "expected a boolean");
    c.allow_large_sample = j["allow_large_sample"].get<bool>();
  }
  c.methods = get_strings(j, "methods", c.methods);
  if (j.contains("policy")) {
    if (!j["policy"].is_string()) field_error("/policy", "expected a string");
    c.policy = j["policy"].get<std::string>();
  }
  if (j.contains("estimators")) {
    c.estimators.clear();
    for (const auto& name : get_strings(j, "estimators", {})) {
      try {
        c.estimators.push_back(parse_estimator(name));
      } catch (const UsageError&) {
        field_error("/estimators", "unknown estimator '" + name + "'");
      }
    }
  }
  if (j.contains("bootstrap_b")) {
    if (!j["bootstrap_b"].is_number_integer()) field_error("/bootstrap_b", "expected an integer");
    c.bootstrap_b = j["bootstrap_b"].get<int>();
  }
  if (j.contains("bart")) {
    const auto& b = j["bart"];
    if (!b.is_object()) field_error("/bart", "expected an object");
    auto int_field = [&](const char* key, int& dst) {
      if (!b.contains(key)) return;
      if (!b[key].is_number_integer()) field_error(std::string("/bart/") + key, "expected an integer");
      dst = b[key].get<int>();
    };
    auto num_field = [&](const char* key, double& dst) {
      if (!b.contains(key)) return;
      if (!b[key].is_number()) field_error(std::string("/bart/") + key, "expected a number");
      dst = b[key].get<double>();
    };
    int_field("trees", c.bart.trees);
    int_field("burn_in", c.bart.burn_in);
    int_field("draws", c.bart.draws);
    num_field("alpha_tree", c.bart.alpha_tree);
    num_field("beta_tree", c.bart.beta_tree);
    num_field("leaf_scale_k", c.bart.leaf_scale_k);
    num_field("sigma_nu", c.bart.sigma_nu);
    num_field("sigma_q", c.bart.sigma_q);
  }
  c.validate();
  return c;
}

SimConfig SimConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open config file " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw UsageError("config " + path.string() + ": " + e.what());
  }
  return from_json(j);
}

nlohmann::json SimConfig::to_json() const {
  std::vector<std::string> est;
  for (auto k : estimators) est.emplace_back(genpop::to_string(k));
  nlohmann::json bart_json = bart;
  return {{"population_size", population_size},
          {"sample_size", sample_size},
          {"covariate_count", covariate_count},
          {"binary_count", binary_count},
          {"binary_rate", binary_rate},
          {"selection_coefficients", selection_coefficients},
          {"outcome_coefficients", outcome_coefficients},
          {"effect_model", effect_model == EffectModel::constant ? "constant" : "linear"},
          {"tau0", tau0},
          {"effect_slopes", effect_slopes},
          {"noise_sd", noise_sd},
          {"replications", replications},
          {"seed", seed},
          {"allow_large_sample", allow_large_sample},
          {"methods", methods},
          {"policy", policy},
          {"estimators", est},
          {"bootstrap_b", bootstrap_b},
          {"bart", bart_json}};
}

void SimConfig::validate() const {
  if (covariate_count == 0) field_error("/covariate_count", "must be at least 1");
  if (binary_count > covariate_count) field_error("/binary_count", "exceeds covariate_count");
  if (!(binary_rate > 0 && binary_rate < 1)) field_error("/binary_rate", "must lie in (0,1)");
  if (selection_coefficients.size() != covariate_count + 1)
    field_error("/selection_coefficients", "expected covariate_count + 1 entries");
  if (outcome_coefficients.size() != covariate_count + 1)
    field_error("/outcome_coefficients", "expected covariate_count + 1 entries");
  if (effect_model == EffectModel::linear && effect_slopes.size() != covariate_count)
    field_error("/effect_slopes", "expected covariate_count entries");
  if (sample_size < 4) field_error("/sample_size", "must be at least 4");
  if (population_size <= sample_size) field_error("/population_size", "must exceed sample_size");
  if (!allow_large_sample && static_cast<double>(sample_size) >= 0.05 * static_cast<double>(population_size))
    field_error("/sample_size", "must be below 5% of population_size (set allow_large_sample to override)");
  if (!(noise_sd >= 0)) field_error("/noise_sd", "must be non-negative");
  if (replications < 1) field_error("/replications", "must be at least 1");
  if (methods.empty()) field_error("/methods", "must list at least one method");
  if (estimators.empty()) field_error("/estimators", "must list at least one estimator");
  if (bootstrap_b != 0 && bootstrap_b < 50) field_error("/bootstrap_b", "must be 0 or at least 50");
  try {
    bart.validate();
  } catch (const Error& e) {
    field_error("/bart", e.what());
  }
}

CovariateSchema SimConfig::schema() const {
  std::vector<CovariateSpec> specs;
  for (std::size_t k = 0; k < continuous_count(); ++k)
    specs.push_back({"x" + std::to_string(k + 1), CovariateKind::continuous, "standard normal"});
  for (std::size_t k = 0; k < binary_count; ++k)
    specs.push_back({"b" + std::to_string(k + 1), CovariateKind::binary, "indicator"});
  return CovariateSchema(std::move(specs));
}

// ---------------------------------------------------------------------------
// Data generation

UnitFrame generate_population(const SimConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng = make_rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::bernoulli_distribution bern(config.binary_rate);
  const std::size_t p = config.covariate_count;
  const std::size_t pc = config.continuous_count();

  std::vector<UnitRecord> units(config.population_size);
  PotentialOutcomes po;
  po.y0.resize(units.size());
  po.y1.resize(units.size());
  const int width = static_cast<int>(std::to_string(config.population_size).size());
  for (std::size_t i = 0; i < units.size(); ++i) {
    auto& u = units[i];
    std::ostringstream id;
    id << 'u' << std::setw(width) << std::setfill('0') << i + 1;
    u.id = id.str();
    u.covariates.resize(p);
    for (std::size_t k = 0; k < pc; ++k) u.covariates[k] = normal(rng);
    for (std::size_t k = pc; k < p; ++k) u.covariates[k] = bern(rng) ? 1.0 : 0.0;
    double mu = config.outcome_coefficients[0];
    double tau = config.tau0;
    for (std::size_t k = 0; k < p; ++k) {
      mu += config.outcome_coefficients[k + 1] * u.covariates[k];
      if (config.effect_model == EffectModel::linear) tau += config.effect_slopes[k] * u.covariates[k];
    }
    const double noise = config.noise_sd * normal(rng);
    po.y0[i] = mu + noise;
    po.y1[i] = mu + tau + noise;
  }
  UnitFrame frame(config.schema(), {"Y"}, std::move(units));
  frame.attach_potential_outcomes(std::move(po));
  return frame;
}

double calibrate_selection_intercept(const Eigen::MatrixXd& x, const std::vector<double>& coefficients,
                                     double target) {
  Eigen::VectorXd slope(x.cols());
  for (Eigen::Index k = 0; k < x.cols(); ++k) slope(k) = coefficients[static_cast<std::size_t>(k) + 1];
  const Eigen::VectorXd eta = x * slope;
  auto expected = [&](double b0) {
    double s = 0;
    for (Eigen::Index i = 0; i < eta.size(); ++i) s += stats::inv_logit(b0 + eta(i));
    return s;
  };
  double lo = -60, hi = 60;
  if (expected(lo) > target || expected(hi) < target)
    throw Error("selection intercept calibration failed to bracket the target sample size");
  for (int it = 0; it < 200 && hi - lo > 1e-12; ++it) {
    const double mid = 0.5 * (lo + hi);
    (expected(mid) < target ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

UnitFrame draw_sample(const UnitFrame& population, const SimConfig& config, std::uint64_t seed) {
  if (config.selection_coefficients.size() != config.covariate_count + 1)
    throw Error("selection_coefficients must have covariate_count + 1 entries");
  if (!population.potential_outcomes()) throw Error("draw_sample needs a synthetic population");
  const auto& po = *population.potential_outcomes();
  const Eigen::MatrixXd x = population.covariate_matrix();
  const double b0 = calibrate_selection_intercept(x, config.selection_coefficients,
                                                  static_cast<double>(config.sample_size));
  Rng rng = make_rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<std::size_t> selected;
  for (std::size_t i = 0; i < population.size(); ++i) {
    double eta = b0;
    for (std::size_t k = 0; k < config.covariate_count; ++k)
      eta += config.selection_coefficients[k + 1] * population[i].covariates[k];
    if (unif(rng) < stats::inv_logit(eta)) selected.push_back(i);
  }
  if (selected.size() < 4) throw Error("draw_sample: fewer than 4 units selected");
  std::vector<std::size_t> order = selected;
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<int> arm(population.size(), -1);
  for (std::size_t k = 0; k < order.size(); ++k) arm[order[k]] = k < order.size() / 2 ? 1 : 0;

  std::vector<UnitRecord> units = population.units();
  for (std::size_t i = 0; i < units.size(); ++i) {
    if (arm[i] < 0) continue;
    units[i].membership = Membership::sample;
    units[i].treatment = arm[i] == 1 ? Arm::treated : Arm::control;
    units[i].outcomes = {arm[i] == 1 ? po.y1[i] : po.y0[i]};
  }
  UnitFrame frame(population.schema(), population.outcome_names(), std::move(units));
  frame.attach_potential_outcomes(po);
  return frame;
}

double true_pate(const UnitFrame& frame, const Subpopulation& sub) {
  if (!frame.potential_outcomes()) throw Error("oracle unavailable");
  const auto& po = *frame.potential_outcomes();
  double s = 0;
  std::size_t n = 0;
  for (auto r : sub.rows) {
    if (frame.is_sample(r)) continue;
    s += po.y1[r] - po.y0[r];
    ++n;
  }
  if (n == 0) throw Error("true_pate: subpopulation has no population units");
  return s / static_cast<double>(n);
}

Subpopulation build_subpopulation(const std::string& method, const UnitFrame& frame, const PropensityFit& fit,
                                  double default_quantile) {
  if (method == "original") return original_population(frame);
  if (method == "crump") return trim_crump(frame, fit);
  if (method == "minmax") return trim_minmax(frame, fit);
  if (method == "covariates") return trim_covariates(frame);
  if (method == "quantile" || method.rfind("quantile:", 0) == 0) {
    double q = default_quantile;
    if (method.size() > 9) {
      try {
        std::size_t used = 0;
        q = std::stod(method.substr(9), &used);
        if (used != method.size() - 9) throw std::invalid_argument("trailing");
      } catch (const std::exception&) {
        throw UsageError("bad quantile in method '" + method + "'");
      }
    }
    return trim_quantile(frame, fit, q);
  }
  if (method.rfind("policy:", 0) == 0) return filter_policy(frame, parse_policy(method.substr(7)), method);
  throw UsageError("unknown redefinition method '" + method + "'");
}

// ---------------------------------------------------------------------------
// Study

const SimEstimateRecord* SimReplication::find(EstimatorKind k, const std::string& method) const {
  for (const auto& e : estimates)
    if (e.estimator == k && e.method == method) return &e;
  return nullptr;
}

const SimCell* SimResult::cell(EstimatorKind k, const std::string& method) const {
  for (const auto& c : cells)
    if (c.estimator == k && c.method == method) return &c;
  return nullptr;
}

SimReplication run_replication(const SimConfig& config, int index) {
  SimReplication rep;
  rep.index = index;
  rep.seed = derive_seed(config.seed, static_cast<std::uint64_t>(index));
  const UnitFrame population = generate_population(config, derive_seed(rep.seed, 1));
  const UnitFrame frame = draw_sample(population, config, derive_seed(rep.seed, 2));
  rep.sample_size = frame.sample_count();
  frame.require_estimable();
  const PropensityFit fit = fit_propensity(frame);

  std::vector<Subpopulation> subs;
  std::vector<std::string> names;
  for (const auto& method : config.methods) {
    try {
      const std::string spec = method == "policy" ? "policy:" + config.policy : method;
      Subpopulation s = build_subpopulation(spec, frame, fit);
      s.label = method;
      rep.n0[method] = s.n0;
      rep.truth[method] = true_pate(frame, s);
      subs.push_back(std::move(s));
      names.push_back(method);
    } catch (const std::exception& e) {
      rep.failures.push_back(method + ": " + e.what());
    }
  }
  for (std::size_t s = 0; s < subs.size(); ++s) {
    try {
      const auto d = diagnose(frame, subs[s], fit);
      rep.b_index[names[s]] = d.b_index;
      rep.overlap[names[s]] = d.overlap;
    } catch (const std::exception& e) {
      rep.failures.push_back(names[s] + " diagnostics: " + e.what());
    }
  }

  std::vector<EstimatorKind> classic;
  bool with_bart = false;
  for (auto k : config.estimators) {
    if (k == EstimatorKind::bart)
      with_bart = true;
    else
      classic.push_back(k);
  }

  auto record = [&](const PateEstimate& e, const std::string& method) {
    rep.estimates.push_back({e.estimator, method, e.estimate, rep.truth[method], e.se, e.ci95});
    if (e.estimator != EstimatorKind::eblup) return;
    for (const auto& st : e.diagnostics["strata"]) {
      if (st["direct"].is_null()) continue;
      const double d = st["direct"].get<double>();
      const double syn = st["synthetic"].get<double>();
      const double eb = st["eblup"].get<double>();
      const double slack = 1e-9 * std::max({1.0, std::abs(d), std::abs(syn)});
      ++rep.eblup_strata_checked;
      if (eb < std::min(d, syn) - slack || eb > std::max(d, syn) + slack) ++rep.eblup_convexity_violations;
    }
  };

  for (std::size_t s = 0; s < subs.size(); ++s) {
    if (classic.empty()) break;
    EstimateOptions opt;
    opt.seed = derive_seed(rep.seed, 100 + s);
    opt.bootstrap_b = config.bootstrap_b;
    // Shared bootstrap first; on failure retry one estimator at a time so the rest still report.
    try {
      for (const auto& e : estimate_many(classic, frame, subs[s], fit, "Y", opt)) record(e, names[s]);
    } catch (const std::exception&) {
      for (auto k : classic) {
        try {
          record(estimate_many({k}, frame, subs[s], fit, "Y", opt).front(), names[s]);
        } catch (const std::exception& e) {
          rep.failures.push_back(std::string(to_string(k)) + " on " + names[s] + ": " + e.what());
        }
      }
    }
  }
  if (with_bart && !subs.empty()) {
    EstimateOptions opt;
    opt.seed = derive_seed(rep.seed, 99);
    opt.bart = config.bart;
    try {
      const auto est = estimate_bart_many(frame, subs, "Y", opt);
      for (std::size_t s = 0; s < subs.size(); ++s) record(est[s], names[s]);
    } catch (const std::exception& e) {
      rep.failures.push_back(std::string("bart: ") + e.what());
    }
  }
  return rep;
}

SimResult run_study(const SimConfig& config) {
  config.validate();
  SimResult result;
  result.config = config;
  const auto R = static_cast<std::size_t>(config.replications);
  result.replications.resize(R);
  parallel_for(R, [&](std::size_t r) {
    try {
      result.replications[r] = run_replication(config, static_cast<int>(r));
    } catch (const std::exception& e) {
      SimReplication failed;
      failed.index = static_cast<int>(r);
      failed.seed = derive_seed(config.seed, r);
      failed.failures.push_back(std::string("replication: ") + e.what());
      result.replications[r] = std::move(failed);
    }
  });

  for (const auto& rep : result.replications) {
    for (const auto& f : rep.failures) {
      ++result.failure_census[f];
    }
    result.eblup_strata_checked += rep.eblup_strata_checked;
    result.eblup_convexity_violations += rep.eblup_convexity_violations;
  }

  for (const auto& method : config.methods) {
    SimMethodSummary m;
    m.method = method;
    std::vector<double> n0, b, ov, truth;
    for (const auto& rep : result.replications) {
      if (auto it = rep.n0.find(method); it != rep.n0.end()) n0.push_back(static_cast<double>(it->second));
      if (auto it = rep.b_index.find(method); it != rep.b_index.end()) b.push_back(it->second);
      if (auto it = rep.overlap.find(method); it != rep.overlap.end()) ov.push_back(it->second);
      if (auto it = rep.truth.find(method); it != rep.truth.end()) truth.push_back(it->second);
    }
    m.runs = static_cast<int>(n0.size());
    m.mean_n0 = stats::mean(n0);
    m.mean_b_index = stats::mean(b);
    m.mean_overlap = stats::mean(ov);
    m.mean_true_pate = stats::mean(truth);
    result.methods.push_back(m);

    for (auto k : config.estimators) {
      SimCell c;
      c.estimator = k;
      c.method = method;
      std::vector<double> est, err, se, cn0;
      int covered = 0, with_ci = 0;
      for (const auto& rep : result.replications) {
        const auto* rec = rep.find(k, method);
        if (!rec) continue;
        est.push_back(rec->estimate);
        err.push_back(rec->estimate - rec->truth);
        cn0.push_back(static_cast<double>(rep.n0.at(method)));
        if (rec->se) se.push_back(*rec->se);
        if (rec->ci95) {
          ++with_ci;
          if (rec->truth >= rec->ci95->first && rec->truth <= rec->ci95->second) ++covered;
        }
      }
      c.runs = static_cast<int>(est.size());
      c.mean_bias = stats::mean(err);
      c.empirical_se = stats::sd(est);
      if (!se.empty()) c.mean_reported_se = stats::mean(se);
      if (with_ci > 0) c.coverage = static_cast<double>(covered) / with_ci;
      c.mean_n0 = stats::mean(cn0);
      result.cells.push_back(c);
    }
  }
  return result;
}

nlohmann::json SimResult::to_json() const {
  auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
  nlohmann::json cells_json = nlohmann::json::array();
  for (const auto& c : cells)
    cells_json.push_back({{"estimator", std::string(genpop::to_string(c.estimator))},
                          {"method", c.method},
                          {"runs", c.runs},
                          {"mean_bias", c.mean_bias},
                          {"empirical_se", c.empirical_se},
                          {"mean_reported_se", opt(c.mean_reported_se)},
                          {"coverage", opt(c.coverage)},
                          {"mean_n0", c.mean_n0}});
  nlohmann::json methods_json = nlohmann::json::array();
  for (const auto& m : methods)
    methods_json.push_back({{"method", m.method},
                            {"runs", m.runs},
                            {"mean_n0", m.mean_n0},
                            {"mean_b_index", m.mean_b_index},
                            {"mean_overlap", m.mean_overlap},
                            {"mean_true_pate", m.mean_true_pate}});
  nlohmann::json reps = nlohmann::json::array();
  for (const auto& r : replications) {
    nlohmann::json est = nlohmann::json::array();
    for (const auto& e : r.estimates) {
      nlohmann::json ci = e.ci95 ? nlohmann::json::array({e.ci95->first, e.ci95->second}) : nlohmann::json(nullptr);
      est.push_back({{"estimator", std::string(genpop::to_string(e.estimator))},
                     {"method", e.method},
                     {"estimate", e.estimate},
                     {"truth", e.truth},
                     {"se", opt(e.se)},
                     {"ci95", ci}});
    }
    reps.push_back({{"index", r.index},
                    {"seed", r.seed},
                    {"sample_size", r.sample_size},
                    {"n0", r.n0},
                    {"b_index", r.b_index},
                    {"overlap", r.overlap},
                    {"true_pate", r.truth},
                    {"estimates", est},
                    {"eblup_strata_checked", r.eblup_strata_checked},
                    {"eblup_convexity_violations", r.eblup_convexity_violations},
                    {"failures", r.failures}});
  }
  return {{"config", config.to_json()},
          {"cells", cells_json},
          {"methods", methods_json},
          {"failure_census", failure_census},
          {"eblup_strata_checked", eblup_strata_checked},
          {"eblup_convexity_violations", eblup_convexity_violations},
          {"replications", reps}};
}

std::string SimResult::to_csv() const {
  auto num = [](double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return std::string(buf);
  };
  std::ostringstream os;
  os << "estimator,method,runs,mean_bias,empirical_se,mean_reported_se,coverage,mean_n0\n";
  for (const auto& c : cells) {
    os << genpop::to_string(c.estimator) << ',' << c.method << ',' << c.runs << ',' << num(c.mean_bias) << ','
       << num(c.empirical_se) << ',' << (c.mean_reported_se ? num(*c.mean_reported_se) : "") << ','
       << (c.coverage ? num(*c.coverage) : "") << ',' << num(c.mean_n0) << '\n';
  }
  return os.str();
}

}  // namespace genpop
