#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "genpop/subpopulation.hpp"

namespace genpop {

enum class CovariateKind { continuous, binary };

struct CovariateSpec {
  std::string name;
  CovariateKind kind = CovariateKind::continuous;
  std::string units;
};

class CovariateSchema {
 public:
  CovariateSchema() = default;
  explicit CovariateSchema(std::vector<CovariateSpec> specs);

  std::size_t size() const { return specs_.size(); }
  const std::vector<CovariateSpec>& specs() const { return specs_; }
  const CovariateSpec& operator[](std::size_t i) const { return specs_[i]; }
  std::optional<std::size_t> index_of(std::string_view name) const;
  std::vector<CovariateKind> kinds() const;

  static CovariateSchema from_json(const nlohmann::json& j);
  static CovariateSchema load(const std::filesystem::path& path);
  nlohmann::json to_json() const;

 private:
  std::vector<CovariateSpec> specs_;
};

// The fourteen school-level covariates of the Indiana CRT frame.
CovariateSchema indiana_schema();

enum class Membership { sample, population_only };
enum class Arm { control = 0, treated = 1 };

struct UnitRecord {
  std::string id;
  std::vector<double> covariates;
  Membership membership = Membership::population_only;
  std::optional<Arm> treatment;
  std::vector<double> outcomes;  // aligned with UnitFrame::outcome_names(); empty off-sample
};

// Both potential outcomes per row, for synthetic frames only.
struct PotentialOutcomes {
  std::vector<double> y0;
  std::vector<double> y1;
};

class UnitFrame {
 public:
  // Validates every invariant; throws Error naming the offending unit.
  UnitFrame(CovariateSchema schema, std::vector<std::string> outcome_names,
            std::vector<UnitRecord> units);

  const CovariateSchema& schema() const { return schema_; }
  const std::vector<std::string>& outcome_names() const { return outcome_names_; }
  const std::vector<UnitRecord>& units() const { return units_; }
  const UnitRecord& operator[](std::size_t row) const { return units_[row]; }
  std::size_t size() const { return units_.size(); }

  std::size_t sample_count() const { return sample_count_; }
  std::size_t population_count() const { return units_.size() - sample_count_; }
  bool is_sample(std::size_t row) const { return units_[row].membership == Membership::sample; }
  std::vector<std::size_t> sample_rows() const;
  std::vector<std::size_t> population_rows() const;

  std::optional<std::size_t> outcome_index(std::string_view name) const;
  std::size_t require_outcome(std::string_view name) const;

  // Sample below 5% of all units.
  bool is_small_study() const;

  // Throws unless both arms have a sample unit and there are at least two.
  void require_estimable() const;

  // rows x covariates matrix for the given rows.
  Eigen::MatrixXd covariate_matrix(const std::vector<std::size_t>& rows) const;
  Eigen::MatrixXd covariate_matrix() const;

  void attach_potential_outcomes(PotentialOutcomes po);
  const std::optional<PotentialOutcomes>& potential_outcomes() const { return oracle_; }

 private:
  CovariateSchema schema_;
  std::vector<std::string> outcome_names_;
  std::vector<UnitRecord> units_;
  std::size_t sample_count_ = 0;
  std::optional<PotentialOutcomes> oracle_;
};

UnitFrame load_csv(const std::filesystem::path& path, const CovariateSchema& schema);
UnitFrame read_csv(std::istream& in, const CovariateSchema& schema);
// Canonical serialization: shortest round-trip number formatting.
void write_csv(std::ostream& out, const UnitFrame& frame);

struct CovariateMeans {
  std::string name;
  double sample_mean = 0;
  double population_mean = 0;  // over every unit, sample included
};

std::vector<CovariateMeans> summarize(const UnitFrame& frame);

enum class Comparator { less, less_equal, greater, greater_equal, equal, in_quantile_range };

struct PolicyPredicate {
  std::string covariate;
  Comparator comparator = Comparator::greater;
  double threshold = 0;
  std::pair<double, double> quantile_range{0, 1};

  // Grammar: <name><op><number> with op in < <= > >= =, or <name>@[<lo>,<hi>]
  // for a quantile range of the population-only distribution.
  static PolicyPredicate parse(std::string_view text);
  std::string to_string() const;
};

// Conjunction joined by '&'.
std::vector<PolicyPredicate> parse_policy(std::string_view text);

Subpopulation filter_policy(const UnitFrame& frame, const std::vector<PolicyPredicate>& predicates,
                            std::string label = "policy");

}  // namespace genpop
