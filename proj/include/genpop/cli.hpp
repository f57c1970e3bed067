#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "genpop/diagnostics.hpp"
#include "genpop/simlab.hpp"

namespace genpop {

inline constexpr const char* kToolName = "genpop";
inline constexpr const char* kToolVersion = "0.1.0";

struct NamedPolicy {
  std::string name;
  std::string spec;
};

// "name:spec" -> {name, spec}. A bare spec gets the spec text as its name.
NamedPolicy parse_named_policy(const std::string& text);

struct AnalyzeOptions {
  std::filesystem::path data;
  std::filesystem::path schema;  // empty: the built-in Indiana schema
  // original | crump | minmax | quantile[:q] | covariates | policy:<name or spec>.
  // Empty: original, crump, minmax, covariates, then every named policy.
  std::vector<std::string> methods;
  std::vector<NamedPolicy> policies;
  std::vector<EstimatorKind> estimators{std::begin(kAllEstimators), std::end(kAllEstimators)};
  std::vector<std::string> outcomes;  // empty: every outcome column
  std::uint64_t seed = 20240601;
  int bootstrap_b = 1000;
  double quantile = 90;
  int bart_trees = 50;
  int bart_draws = 1000;
  bool interactions = false;
  std::filesystem::path out = "genpop-out";
  std::vector<std::string> invocation;
};

struct DiagnoseOptions {
  std::filesystem::path data;
  std::filesystem::path schema;
  std::string method = "original";
  std::vector<NamedPolicy> policies;
  std::uint64_t seed = 20240601;
  double quantile = 90;
  bool interactions = false;
  std::filesystem::path out = "genpop-out";
  std::vector<std::string> invocation;
};

struct SimulateOptions {
  std::filesystem::path config;  // empty: the default scenario
  std::optional<int> replications;
  std::filesystem::path out = "genpop-out";
  std::vector<std::string> invocation;
};

// Each writes its artifacts under options.out and returns the JSON report.
// Failures surface as Error with the failing stage named in the message.
nlohmann::json cmd_analyze(const AnalyzeOptions& options);
nlohmann::json cmd_diagnose(const DiagnoseOptions& options);
nlohmann::json cmd_simulate(const SimulateOptions& options);

// Whole command line; returns the process exit code (0 ok, 1 analysis error, 2 usage).
int run_cli(int argc, const char* const* argv);

// Overlaid sample/population score densities with the shared area shaded.
std::string density_svg(const DensityCurve& sample, const DensityCurve& population, const std::string& title,
                        const std::string& header);

}  // namespace genpop
