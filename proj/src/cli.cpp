#include "genpop/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <charconv>
#include <fstream>
#include <iostream>
#include <sstream>

#include "genpop/error.hpp"
#include "genpop/parallel.hpp"
#include "genpop/random.hpp"
#include "genpop/redefine.hpp"

namespace genpop {

namespace {

std::string num6(double v) {
  if (!std::isfinite(v)) return std::isnan(v) ? "nan" : (v > 0 ? "inf" : "-inf");
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 6);
  return std::string(buf, end);
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

std::string join_invocation(const std::vector<std::string>& argv) {
  std::string out;
  for (const auto& a : argv) {
    if (!out.empty()) out += ' ';
    if (a.empty() || a.find_first_of(" \t\"'&|;<>") != std::string::npos) {
      out += '\'';
      for (char c : a) out += c == '\'' ? std::string("'\\''") : std::string(1, c);
      out += '\'';
    } else {
      out += a;
    }
  }
  return out;
}

// One comment line heading every CSV and SVG artifact.
std::string provenance_line(const std::vector<std::string>& invocation, std::uint64_t seed) {
  return std::string(kToolName) + " " + kToolVersion + " seed=" + std::to_string(seed) +
         " invocation: " + join_invocation(invocation);
}

// Silverman density, or a fixed narrow kernel for a constant score list so the plot still renders.
DensityCurve plot_density(const std::vector<double>& x) {
  const bool constant = std::all_of(x.begin(), x.end(), [&](double e) { return e == x.front(); });
  return constant ? unit_interval_density(x, 0.02) : unit_interval_density(x);
}

nlohmann::json tool_header(const std::vector<std::string>& invocation, std::uint64_t seed) {
  return {{"tool", {{"name", kToolName}, {"version", kToolVersion}}}, {"invocation", invocation}, {"seed", seed}};
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
  if (!out) throw Error("write failed for " + path.string());
}

void write_json(const std::filesystem::path& path, const nlohmann::json& j) { write_file(path, j.dump(2) + "\n"); }

std::string slug(const std::string& label) {
  std::string s;
  for (char c : label) s += std::isalnum(static_cast<unsigned char>(c)) || c == '.' || c == '-' ? c : '_';
  return s;
}

// Runs f, prefixing any Error with the stage name.
template <typename F>
auto stage(const std::string& name, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const UsageError&) {
    throw;
  } catch (const std::exception& e) {
    throw Error(name + ": " + e.what());
  }
}

CovariateSchema schema_from(const std::filesystem::path& path) {
  return path.empty() ? indiana_schema() : CovariateSchema::load(path);
}

std::string resolve_method(const std::string& method, const std::vector<NamedPolicy>& policies) {
  if (method.rfind("policy:", 0) != 0) return method;
  const std::string ref = method.substr(7);
  for (const auto& p : policies)
    if (p.name == ref) return "policy:" + p.spec;
  return method;
}

Subpopulation build_method(const std::string& method, const UnitFrame& frame, const PropensityFit& fit,
                           double quantile, const std::vector<NamedPolicy>& policies) {
  Subpopulation s = build_subpopulation(resolve_method(method, policies), frame, fit, quantile);
  if (method == "quantile") s.label = "quantile:" + num6(quantile);
  if (method.rfind("policy:", 0) == 0) s.label = method;
  return s;
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item.erase(0, item.find_first_not_of(" \t"));
    item.erase(item.find_last_not_of(" \t") + 1);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

}  // namespace

NamedPolicy parse_named_policy(const std::string& text) {
  const auto colon = text.find(':');
  NamedPolicy p;
  if (colon == std::string::npos) {
    p.name = p.spec = text;
  } else {
    p.name = text.substr(0, colon);
    p.spec = text.substr(colon + 1);
  }
  if (p.name.empty() || p.spec.empty()) throw UsageError("bad --policy '" + text + "', expected name:spec");
  parse_policy(p.spec);  // validates the grammar early
  return p;
}

// ---------------------------------------------------------------------------

nlohmann::json cmd_analyze(const AnalyzeOptions& opt) {
  if (opt.bootstrap_b != 0 && opt.bootstrap_b < 50) throw UsageError("--bootstrap-b must be 0 or at least 50");
  if (opt.estimators.empty()) throw UsageError("--estimators is empty");
  const CovariateSchema schema = stage("schema", [&] { return schema_from(opt.schema); });
  const UnitFrame frame = stage("load", [&] { return load_csv(opt.data, schema); });
  stage("load", [&] { frame.require_estimable(); });

  std::vector<std::string> outcomes = opt.outcomes.empty() ? frame.outcome_names() : opt.outcomes;
  for (const auto& o : outcomes) stage("load", [&] { frame.require_outcome(o); });

  std::vector<std::string> methods = opt.methods;
  if (methods.empty()) {
    methods = {"original", "crump", "minmax", "covariates"};
    for (const auto& p : opt.policies) methods.push_back("policy:" + p.name);
  }

  PropensityOptions popts;
  popts.pairwise_interactions = opt.interactions;
  const PropensityFit fit = stage("propensity", [&] { return fit_propensity(frame, popts); });

  std::vector<Subpopulation> subs;
  for (const auto& m : methods)
    subs.push_back(stage("redefine " + m, [&] { return build_method(m, frame, fit, opt.quantile, opt.policies); }));
  for (std::size_t i = 0; i < subs.size(); ++i)
    for (std::size_t j = 0; j < i; ++j)
      if (subs[i].label == subs[j].label) throw UsageError("method listed twice: " + subs[i].label);

  std::vector<DiagnosticsReport> diags;
  for (const auto& s : subs) diags.push_back(stage("diagnostics " + s.label, [&] { return diagnose(frame, s, fit); }));

  BartConfig bart;
  bart.trees = opt.bart_trees;
  bart.draws = opt.bart_draws;
  stage("bart config", [&] { bart.validate(); });

  std::vector<EstimatorKind> classic;
  bool with_bart = false;
  for (auto k : opt.estimators) {
    if (k == EstimatorKind::bart)
      with_bart = true;
    else
      classic.push_back(k);
  }

  // estimates[sub][outcome] in estimator order as requested
  struct Cell {
    std::vector<nlohmann::json> rows;
  };
  std::vector<std::vector<Cell>> cells(subs.size(), std::vector<Cell>(outcomes.size()));
  auto row_json = [](const PateEstimate& e) {
    nlohmann::json j = e;
    j["error"] = nullptr;
    return j;
  };
  auto failed_row = [&](EstimatorKind k, const Subpopulation& s, const std::string& outcome, std::uint64_t seed,
                        const std::string& what) {
    return nlohmann::json{{"estimator", std::string(to_string(k))},
                          {"outcome", outcome},
                          {"subpopulation", s.label},
                          {"n0", s.n0},
                          {"seed", seed},
                          {"estimate", nullptr},
                          {"se", nullptr},
                          {"ci95", nullptr},
                          {"diagnostics", nlohmann::json::object()},
                          {"error", what}};
  };

  parallel_for(subs.size() * outcomes.size(), [&](std::size_t cell) {
    const std::size_t s = cell / outcomes.size(), o = cell % outcomes.size();
    if (classic.empty()) return;
    EstimateOptions eo;
    eo.seed = derive_seed(opt.seed, hash_label(subs[s].label + "|" + outcomes[o]));
    eo.bootstrap_b = opt.bootstrap_b;
    eo.propensity = popts;
    auto& rows = cells[s][o].rows;
    try {
      for (const auto& e : estimate_many(classic, frame, subs[s], fit, outcomes[o], eo)) rows.push_back(row_json(e));
    } catch (const std::exception&) {
      rows.clear();
      for (auto k : classic) {
        try {
          rows.push_back(row_json(estimate_many({k}, frame, subs[s], fit, outcomes[o], eo).front()));
        } catch (const std::exception& e) {
          rows.push_back(failed_row(k, subs[s], outcomes[o], eo.seed, e.what()));
        }
      }
    }
  });
  if (with_bart) {
    for (std::size_t o = 0; o < outcomes.size(); ++o) {
      EstimateOptions eo;
      eo.seed = derive_seed(opt.seed, hash_label("bart|" + outcomes[o]));
      eo.bart = bart;
      try {
        const auto est = estimate_bart_many(frame, subs, outcomes[o], eo);
        for (std::size_t s = 0; s < subs.size(); ++s) cells[s][o].rows.push_back(row_json(est[s]));
      } catch (const std::exception& e) {
        for (std::size_t s = 0; s < subs.size(); ++s)
          cells[s][o].rows.push_back(failed_row(EstimatorKind::bart, subs[s], outcomes[o], eo.seed, e.what()));
      }
    }
  }
  // Rows follow the requested estimator order.
  for (auto& per_sub : cells)
    for (auto& c : per_sub)
      std::stable_sort(c.rows.begin(), c.rows.end(), [&](const nlohmann::json& a, const nlohmann::json& b) {
        auto rank = [&](const nlohmann::json& r) {
          const auto k = parse_estimator(r["estimator"].get<std::string>());
          return std::find(opt.estimators.begin(), opt.estimators.end(), k) - opt.estimators.begin();
        };
        return rank(a) < rank(b);
      });

  // --- report ---
  const auto means = summarize(frame);
  nlohmann::json means_json = nlohmann::json::array();
  for (const auto& m : means)
    means_json.push_back({{"covariate", m.name}, {"sample_mean", m.sample_mean}, {"population_mean", m.population_mean}});

  nlohmann::json report = tool_header(opt.invocation, opt.seed);
  report["command"] = "analyze";
  report["data"] = opt.data.generic_string();
  report["schema"] = opt.schema.empty() ? nlohmann::json("builtin:indiana") : nlohmann::json(opt.schema.generic_string());
  report["frame"] = {{"sample_count", frame.sample_count()},
                     {"population_count", frame.population_count()},
                     {"small_study", frame.is_small_study()},
                     {"outcomes", outcomes},
                     {"covariate_means", means_json}};
  nlohmann::json pj = fit;
  pj.erase("scores");
  report["propensity"] = pj;
  std::vector<std::string> est_names;
  for (auto k : opt.estimators) est_names.emplace_back(to_string(k));
  report["estimators"] = est_names;
  report["bootstrap_b"] = opt.bootstrap_b;
  report["bart"] = bart;

  nlohmann::json sections = nlohmann::json::array();
  for (std::size_t s = 0; s < subs.size(); ++s) {
    nlohmann::json est = nlohmann::json::array();
    for (std::size_t o = 0; o < outcomes.size(); ++o)
      for (const auto& r : cells[s][o].rows) est.push_back(r);
    nlohmann::json sub_json = subs[s];
    sub_json.erase("retained_ids");
    sections.push_back({{"label", subs[s].label},
                        {"method", std::string(to_string(subs[s].method))},
                        {"n0", subs[s].n0},
                        {"provenance", subs[s].provenance},
                        {"diagnostics", diags[s]},
                        {"estimates", est},
                        {"plot", "density_" + slug(subs[s].label) + ".svg"}});
  }
  report["subpopulations"] = sections;

  // --- files ---
  stage("write", [&] {
    std::filesystem::create_directories(opt.out);
    const std::string header = "# " + provenance_line(opt.invocation, opt.seed) + "\n";
    write_json(opt.out / "report.json", report);

    nlohmann::json pfile = tool_header(opt.invocation, opt.seed);
    pfile["propensity"] = fit;
    write_json(opt.out / "propensity.json", pfile);

    std::ostringstream cm;
    cm << header << "covariate,sample_mean,population_mean\n";
    for (const auto& m : means)
      cm << csv_field(m.name) << ',' << num6(m.sample_mean) << ',' << num6(m.population_mean) << '\n';
    write_file(opt.out / "covariate_means.csv", cm.str());

    std::ostringstream es;
    es << header << "subpopulation,n0,outcome,estimator,estimate,se,ci95_lo,ci95_hi,seed,error\n";
    for (const auto& sec : sections)
      for (const auto& r : sec["estimates"]) {
        auto opt_num = [](const nlohmann::json& v) { return v.is_null() ? std::string() : num6(v.get<double>()); };
        es << csv_field(sec["label"].get<std::string>()) << ',' << sec["n0"].get<std::size_t>() << ','
           << csv_field(r["outcome"].get<std::string>()) << ',' << r["estimator"].get<std::string>() << ','
           << opt_num(r["estimate"]) << ',' << opt_num(r["se"]) << ','
           << (r["ci95"].is_null() ? "" : num6(r["ci95"][0].get<double>())) << ','
           << (r["ci95"].is_null() ? "" : num6(r["ci95"][1].get<double>())) << ','
           << r["seed"].get<std::uint64_t>() << ',' << (r["error"].is_null() ? "" : csv_field(r["error"].get<std::string>()))
           << '\n';
      }
    write_file(opt.out / "estimates.csv", es.str());

    std::ostringstream ds;
    ds << header << "subpopulation,method,n0,b_index,overlap,low_generalizability,sample_bandwidth,population_bandwidth\n";
    for (std::size_t s = 0; s < subs.size(); ++s)
      ds << csv_field(subs[s].label) << ',' << to_string(subs[s].method) << ',' << subs[s].n0 << ','
         << num6(diags[s].b_index) << ',' << num6(diags[s].overlap) << ','
         << (diags[s].low_generalizability() ? "true" : "false") << ',' << num6(diags[s].sample_bandwidth) << ','
         << num6(diags[s].population_bandwidth) << '\n';
    write_file(opt.out / "diagnostics.csv", ds.str());

    std::ostringstream bs;
    bs << header << "subpopulation,covariate,smd,degenerate\n";
    for (std::size_t s = 0; s < subs.size(); ++s)
      for (const auto& b : diags[s].balance)
        bs << csv_field(subs[s].label) << ',' << csv_field(b.covariate) << ','
           << (b.degenerate ? std::string() : num6(b.smd)) << ',' << (b.degenerate ? "true" : "false") << '\n';
    write_file(opt.out / "balance.csv", bs.str());

    std::vector<double> sample_scores;
    for (auto r : frame.sample_rows()) sample_scores.push_back(fit.scores[r]);
    const DensityCurve sample_curve = plot_density(sample_scores);
    for (std::size_t s = 0; s < subs.size(); ++s) {
      std::vector<double> pop;
      for (auto r : subs[s].population_rows(frame)) pop.push_back(fit.scores[r]);
      const std::string title = subs[s].label + "  N0=" + std::to_string(subs[s].n0) +
                                "  B=" + num6(diags[s].b_index);
      write_file(opt.out / ("density_" + slug(subs[s].label) + ".svg"),
                 density_svg(sample_curve, plot_density(pop), title, provenance_line(opt.invocation, opt.seed)));
    }
  });
  return report;
}

nlohmann::json cmd_diagnose(const DiagnoseOptions& opt) {
  const CovariateSchema schema = stage("schema", [&] { return schema_from(opt.schema); });
  const UnitFrame frame = stage("load", [&] { return load_csv(opt.data, schema); });
  if (frame.sample_count() < 2) throw Error("load: diagnostics need at least two sample units");
  PropensityOptions popts;
  popts.pairwise_interactions = opt.interactions;
  const PropensityFit fit = stage("propensity", [&] { return fit_propensity(frame, popts); });
  const Subpopulation sub =
      stage("redefine " + opt.method, [&] { return build_method(opt.method, frame, fit, opt.quantile, opt.policies); });
  const DiagnosticsReport d = stage("diagnostics", [&] { return diagnose(frame, sub, fit); });

  nlohmann::json report = tool_header(opt.invocation, opt.seed);
  report["command"] = "diagnose";
  report["data"] = opt.data.generic_string();
  report["subpopulation"] = {{"label", sub.label},
                             {"method", std::string(to_string(sub.method))},
                             {"n0", sub.n0},
                             {"provenance", sub.provenance}};
  report["diagnostics"] = d;
  const std::string plot = "density_" + slug(sub.label) + ".svg";
  report["plot"] = plot;

  stage("write", [&] {
    std::filesystem::create_directories(opt.out);
    write_json(opt.out / "diagnostics.json", report);
    std::vector<double> s, p;
    for (auto r : frame.sample_rows()) s.push_back(fit.scores[r]);
    for (auto r : sub.population_rows(frame)) p.push_back(fit.scores[r]);
    write_file(opt.out / plot,
               density_svg(plot_density(s), plot_density(p),
                           sub.label + "  N0=" + std::to_string(sub.n0) + "  B=" + num6(d.b_index),
                           provenance_line(opt.invocation, opt.seed)));
  });
  return report;
}

nlohmann::json cmd_simulate(const SimulateOptions& opt) {
  SimConfig config = opt.config.empty() ? SimConfig::defaults() : SimConfig::load(opt.config);
  if (opt.replications) {
    config.replications = *opt.replications;
    config.validate();
  }
  const SimResult result = stage("simulate", [&] { return run_study(config); });
  nlohmann::json report = tool_header(opt.invocation, config.seed);
  report["command"] = "simulate";
  const nlohmann::json body = result.to_json();
  for (auto& [k, v] : body.items()) report[k] = v;
  stage("write", [&] {
    std::filesystem::create_directories(opt.out);
    write_json(opt.out / "simulation.json", report);
    write_file(opt.out / "simulation.csv", "# " + provenance_line(opt.invocation, config.seed) + "\n" + result.to_csv());
  });
  return report;
}

// ---------------------------------------------------------------------------

int run_cli(int argc, const char* const* argv) {
  std::vector<std::string> invocation(argv, argv + argc);
  if (!invocation.empty()) invocation[0] = kToolName;

  CLI::App app{"Generalize treatment effects from a study sample to redefined target populations", kToolName};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kToolName) + " " + kToolVersion);

  AnalyzeOptions an;
  std::string an_methods, an_estimators, an_outcomes;
  std::vector<std::string> an_policies;
  auto* analyze = app.add_subcommand("analyze", "Estimate the PATE on the original and redefined populations");
  analyze->add_option("--data", an.data, "Unit CSV (sample and population rows)")->required()->check(CLI::ExistingFile);
  analyze->add_option("--schema", an.schema, "Covariate schema JSON (default: built-in Indiana schema)")
      ->check(CLI::ExistingFile);
  analyze->add_option("--methods", an_methods,
                      "Comma list: original,crump,minmax,quantile[:q],covariates,policy:<name|spec>");
  analyze->add_option("--estimators", an_estimators, "Comma list: ipw,bart,outcome_model,tmle,eblup (default all)");
  analyze->add_option("--outcomes", an_outcomes, "Comma list of outcome names (default all)");
  analyze->add_option("--seed", an.seed, "Master seed")->capture_default_str();
  analyze->add_option("--bootstrap-b", an.bootstrap_b, "Bootstrap replicates, 0 to skip")->capture_default_str();
  analyze->add_option("--quantile", an.quantile, "Percentile for the quantile method")
      ->check(CLI::Range(50.0, 99.0))
      ->capture_default_str();
  analyze->add_option("--policy", an_policies, "Named policy predicate, name:spec (repeatable)");
  analyze->add_option("--bart-trees", an.bart_trees)->capture_default_str();
  analyze->add_option("--bart-draws", an.bart_draws)->capture_default_str();
  analyze->add_flag("--interactions", an.interactions, "Add pairwise continuous interactions to the propensity model");
  analyze->add_option("--out", an.out, "Output directory")->capture_default_str();

  DiagnoseOptions dg;
  std::vector<std::string> dg_policies;
  auto* diag = app.add_subcommand("diagnose", "B-index, overlap and balance for one population");
  diag->add_option("--data", dg.data)->required()->check(CLI::ExistingFile);
  diag->add_option("--schema", dg.schema)->check(CLI::ExistingFile);
  diag->add_option("--method", dg.method)->capture_default_str();
  diag->add_option("--policy", dg_policies, "Named policy predicate, name:spec (repeatable)");
  diag->add_option("--seed", dg.seed)->capture_default_str();
  diag->add_option("--quantile", dg.quantile)->check(CLI::Range(50.0, 99.0))->capture_default_str();
  diag->add_flag("--interactions", dg.interactions);
  diag->add_option("--out", dg.out)->capture_default_str();

  SimulateOptions sm;
  int sm_reps = 0;
  auto* sim = app.add_subcommand("simulate", "Run the simulation lab");
  sim->add_option("--config", sm.config, "SimConfig JSON (default scenario when omitted)")->check(CLI::ExistingFile);
  auto* reps_opt = sim->add_option("--replications", sm_reps, "Override the replication count")->check(CLI::PositiveNumber);
  sim->add_option("--out", sm.out)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*analyze) {
      an.invocation = invocation;
      an.methods = split_list(an_methods);
      if (!an_estimators.empty()) {
        an.estimators.clear();
        for (const auto& name : split_list(an_estimators)) an.estimators.push_back(parse_estimator(name));
      }
      an.outcomes = split_list(an_outcomes);
      for (const auto& p : an_policies) an.policies.push_back(parse_named_policy(p));
      const auto report = cmd_analyze(an);
      std::cout << "wrote " << (an.out / "report.json").string() << " (" << report["subpopulations"].size()
                << " subpopulations)\n";
    } else if (*diag) {
      dg.invocation = invocation;
      for (const auto& p : dg_policies) dg.policies.push_back(parse_named_policy(p));
      const auto report = cmd_diagnose(dg);
      std::cout << "b_index " << report["diagnostics"]["b_index"].get<double>() << ", overlap "
                << report["diagnostics"]["overlap"].get<double>() << "\n";
    } else if (*sim) {
      sm.invocation = invocation;
      if (reps_opt->count() > 0) sm.replications = sm_reps;
      const auto report = cmd_simulate(sm);
      std::cout << "wrote " << (sm.out / "simulation.json").string() << "\n";
    }
  } catch (const UsageError& e) {
    std::cerr << "genpop: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "genpop: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace genpop
