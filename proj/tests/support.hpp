#pragma once

#include <string>
#include <vector>

#include "genpop/frame.hpp"

namespace testing {

using genpop::Arm;
using genpop::CovariateKind;
using genpop::CovariateSchema;
using genpop::CovariateSpec;
using genpop::Membership;
using genpop::UnitFrame;
using genpop::UnitRecord;

inline CovariateSchema continuous_schema(std::size_t p) {
  std::vector<CovariateSpec> specs;
  for (std::size_t k = 0; k < p; ++k) specs.push_back({"x" + std::to_string(k + 1), CovariateKind::continuous, ""});
  return CovariateSchema(std::move(specs));
}

inline UnitRecord sample_unit(std::string id, std::vector<double> x, bool treated, std::vector<double> y) {
  UnitRecord u;
  u.id = std::move(id);
  u.covariates = std::move(x);
  u.membership = Membership::sample;
  u.treatment = treated ? Arm::treated : Arm::control;
  u.outcomes = std::move(y);
  return u;
}

inline UnitRecord population_unit(std::string id, std::vector<double> x) {
  UnitRecord u;
  u.id = std::move(id);
  u.covariates = std::move(x);
  return u;
}

// Frame with one outcome "Y".
inline UnitFrame make_frame(const CovariateSchema& schema, std::vector<UnitRecord> units) {
  return UnitFrame(schema, {"Y"}, std::move(units));
}

inline std::string source_path(const std::string& rel) { return std::string(GENPOP_SOURCE_DIR) + "/" + rel; }

}  // namespace testing
