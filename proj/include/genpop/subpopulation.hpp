#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace genpop {

class UnitFrame;

enum class RedefinitionMethod { original, crump, ps_minmax, ps_quantile, covariate_range, policy };

std::string_view to_string(RedefinitionMethod m);

// A redefined population of inference. Sample units are always retained;
// only population-only units are ever trimmed.
struct Subpopulation {
  RedefinitionMethod method = RedefinitionMethod::original;
  std::string label;                     // e.g. "crump", "quantile:90", "policy:rural"
  std::vector<std::size_t> rows;         // retained frame rows, ascending
  std::vector<std::string> retained_ids; // ids of `rows`, same order
  std::size_t n0 = 0;                    // retained population-only units
  nlohmann::json provenance = nlohmann::json::object();

  // Builds the row/id lists from a keep-mask over population-only units; sample
  // rows are forced in. Throws Error("empty subpopulation") when n0 would be 0.
  static Subpopulation from_mask(const UnitFrame& frame, RedefinitionMethod method,
                                 std::string label, const std::vector<bool>& keep,
                                 nlohmann::json provenance);

  // Retained population-only rows (the estimation target).
  std::vector<std::size_t> population_rows(const UnitFrame& frame) const;
};

void to_json(nlohmann::json& j, const Subpopulation& s);

// The untrimmed population.
Subpopulation original_population(const UnitFrame& frame);

}  // namespace genpop
