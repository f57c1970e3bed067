#include "genpop/frame.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "genpop/error.hpp"
#include "genpop/stats.hpp"

namespace genpop {

namespace {

std::string trim(std::string_view s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

// Comma-separated fields; double quotes may wrap a field containing commas.
std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(std::move(cur));
  return out;
}

std::optional<double> parse_number(const std::string& cell) {
  std::string t = trim(cell);
  if (t.empty()) return std::nullopt;
  const char* first = t.data();
  if (*first == '+') ++first;
  double v = 0;
  auto [ptr, ec] = std::from_chars(first, t.data() + t.size(), v);
  if (ec != std::errc() || ptr != t.data() + t.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

std::string format_number(double v) {
  std::array<char, 64> buf{};
  auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), ptr);
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

}  // namespace

// ---------------------------------------------------------------------------
// Schema

CovariateSchema::CovariateSchema(std::vector<CovariateSpec> specs) : specs_(std::move(specs)) {
  if (specs_.empty()) throw Error("covariate schema needs at least one covariate");
  std::unordered_set<std::string> seen;
  for (const auto& s : specs_) {
    if (trim(s.name).empty()) throw Error("covariate name must be nonempty");
    if (!seen.insert(lower(trim(s.name))).second)
      throw Error("duplicate covariate name '" + s.name + "'");
  }
}

std::optional<std::size_t> CovariateSchema::index_of(std::string_view name) const {
  const std::string key = lower(trim(name));
  for (std::size_t i = 0; i < specs_.size(); ++i)
    if (lower(specs_[i].name) == key) return i;
  return std::nullopt;
}

std::vector<CovariateKind> CovariateSchema::kinds() const {
  std::vector<CovariateKind> k;
  k.reserve(specs_.size());
  for (const auto& s : specs_) k.push_back(s.kind);
  return k;
}

CovariateSchema CovariateSchema::from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("covariates") || !j["covariates"].is_array())
    throw UsageError("schema: expected an object with a 'covariates' array");
  std::vector<CovariateSpec> specs;
  for (std::size_t i = 0; i < j["covariates"].size(); ++i) {
    const auto& c = j["covariates"][i];
    const std::string where = "schema: /covariates/" + std::to_string(i);
    if (!c.is_object() || !c.contains("name") || !c["name"].is_string())
      throw UsageError(where + "/name: expected a string");
    CovariateSpec spec;
    spec.name = trim(c["name"].get<std::string>());
    std::string kind = c.value("kind", std::string("continuous"));
    if (kind == "continuous") {
      spec.kind = CovariateKind::continuous;
    } else if (kind == "binary") {
      spec.kind = CovariateKind::binary;
    } else {
      throw UsageError(where + "/kind: expected 'continuous' or 'binary', got '" + kind + "'");
    }
    spec.units = c.value("units", std::string());
    specs.push_back(std::move(spec));
  }
  try {
    return CovariateSchema(std::move(specs));
  } catch (const Error& e) {
    throw UsageError(std::string("schema: ") + e.what());
  }
}

CovariateSchema CovariateSchema::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open schema file " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw UsageError("schema " + path.string() + ": " + e.what());
  }
  return from_json(j);
}

nlohmann::json CovariateSchema::to_json() const {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& s : specs_)
    arr.push_back({{"name", s.name},
                   {"kind", s.kind == CovariateKind::binary ? "binary" : "continuous"},
                   {"units", s.units}});
  return {{"covariates", arr}};
}

CovariateSchema indiana_schema() {
  using K = CovariateKind;
  return CovariateSchema({
      {"pretest_ela", K::continuous, "test-score points"},
      {"pretest_math", K::continuous, "test-score points"},
      {"attendance", K::continuous, "percent"},
      {"fulltime_staff", K::continuous, "count"},
      {"enrollment", K::continuous, "count"},
      {"pupil_teacher_ratio", K::continuous, "ratio"},
      {"county_population", K::continuous, "count"},
      {"title1", K::binary, "indicator"},
      {"schoolwide_title1", K::binary, "indicator"},
      {"prop_male", K::continuous, "proportion in [0,1]"},
      {"prop_white", K::continuous, "proportion in [0,1]"},
      {"prop_special_ed", K::continuous, "proportion in [0,1]"},
      {"prop_frpl", K::continuous, "proportion in [0,1]"},
      {"prop_lep", K::continuous, "proportion in [0,1]"},
  });
}

// ---------------------------------------------------------------------------
// Frame

UnitFrame::UnitFrame(CovariateSchema schema, std::vector<std::string> outcome_names,
                     std::vector<UnitRecord> units)
    : schema_(std::move(schema)), outcome_names_(std::move(outcome_names)), units_(std::move(units)) {
  if (schema_.size() == 0) throw Error("frame needs a nonempty covariate schema");
  std::unordered_set<std::string> ids;
  for (const auto& u : units_) {
    const std::string who = "unit '" + u.id + "'";
    if (u.id.empty()) throw Error("unit with empty id");
    if (!ids.insert(u.id).second) throw Error("duplicate id '" + u.id + "'");
    if (u.covariates.size() != schema_.size())
      throw Error(who + ": expected " + std::to_string(schema_.size()) + " covariates, got " +
                  std::to_string(u.covariates.size()));
    for (std::size_t k = 0; k < schema_.size(); ++k) {
      double v = u.covariates[k];
      if (!std::isfinite(v)) throw Error(who + ": non-finite value for " + schema_[k].name);
      if (schema_[k].kind == CovariateKind::binary && v != 0.0 && v != 1.0)
        throw Error(who + ": binary covariate " + schema_[k].name + " must be 0 or 1");
    }
    if (u.membership == Membership::sample) {
      ++sample_count_;
      if (!u.treatment) throw Error(who + ": sample unit lacks a treatment value");
      if (u.outcomes.size() != outcome_names_.size())
        throw Error(who + ": sample unit lacks outcome values");
      for (double y : u.outcomes)
        if (!std::isfinite(y)) throw Error(who + ": non-finite outcome");
    } else {
      if (u.treatment) throw Error(who + ": population-only unit has a treatment value");
      if (!u.outcomes.empty()) throw Error(who + ": population-only unit has outcome values");
    }
  }
}

std::vector<std::size_t> UnitFrame::sample_rows() const {
  std::vector<std::size_t> r;
  for (std::size_t i = 0; i < units_.size(); ++i)
    if (is_sample(i)) r.push_back(i);
  return r;
}

std::vector<std::size_t> UnitFrame::population_rows() const {
  std::vector<std::size_t> r;
  for (std::size_t i = 0; i < units_.size(); ++i)
    if (!is_sample(i)) r.push_back(i);
  return r;
}

std::optional<std::size_t> UnitFrame::outcome_index(std::string_view name) const {
  const std::string key = lower(trim(name));
  for (std::size_t i = 0; i < outcome_names_.size(); ++i)
    if (lower(outcome_names_[i]) == key) return i;
  return std::nullopt;
}

std::size_t UnitFrame::require_outcome(std::string_view name) const {
  auto idx = outcome_index(name);
  if (!idx) throw Error("unknown outcome '" + std::string(name) + "'");
  return *idx;
}

bool UnitFrame::is_small_study() const {
  return !units_.empty() &&
         static_cast<double>(sample_count_) < 0.05 * static_cast<double>(units_.size());
}

void UnitFrame::require_estimable() const {
  std::size_t treated = 0, control = 0;
  for (const auto& u : units_) {
    if (u.membership != Membership::sample) continue;
    (*u.treatment == Arm::treated ? treated : control) += 1;
  }
  if (treated + control < 2 || treated == 0 || control == 0)
    throw Error("estimation needs at least one treated and one control sample unit");
}

Eigen::MatrixXd UnitFrame::covariate_matrix(const std::vector<std::size_t>& rows) const {
  Eigen::MatrixXd x(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(schema_.size()));
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t k = 0; k < schema_.size(); ++k)
      x(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(k)) = units_[rows[r]].covariates[k];
  return x;
}

Eigen::MatrixXd UnitFrame::covariate_matrix() const {
  std::vector<std::size_t> all(units_.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  return covariate_matrix(all);
}

void UnitFrame::attach_potential_outcomes(PotentialOutcomes po) {
  if (po.y0.size() != units_.size() || po.y1.size() != units_.size())
    throw Error("potential outcome table does not match frame size");
  oracle_ = std::move(po);
}

// ---------------------------------------------------------------------------
// CSV

UnitFrame read_csv(std::istream& in, const CovariateSchema& schema) {
  std::string line;
  if (!std::getline(in, line) || trim(line).empty()) throw Error("no data rows");
  if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) line.erase(0, 3);  // BOM
  const auto header = split_csv_line(line);

  std::optional<std::size_t> id_col, membership_col, treatment_col;
  std::vector<std::optional<std::size_t>> cov_cols(schema.size());
  std::vector<std::string> outcome_names;
  std::vector<std::size_t> outcome_cols;
  for (std::size_t c = 0; c < header.size(); ++c) {
    const std::string raw = trim(header[c]);
    const std::string key = lower(raw);
    if (key == "id") {
      id_col = c;
    } else if (key == "membership") {
      membership_col = c;
    } else if (key == "treatment") {
      treatment_col = c;
    } else if (key.rfind("outcome:", 0) == 0) {
      outcome_names.push_back(trim(raw.substr(8)));
      outcome_cols.push_back(c);
    } else if (auto k = schema.index_of(raw)) {
      cov_cols[*k] = c;
    }
  }
  if (!id_col) throw Error("missing column 'id'");
  if (!membership_col) throw Error("missing column 'membership'");
  if (!treatment_col) throw Error("missing column 'treatment'");
  for (std::size_t k = 0; k < schema.size(); ++k)
    if (!cov_cols[k]) throw Error("missing column '" + schema[k].name + "'");

  std::vector<UnitRecord> units;
  std::unordered_set<std::string> ids;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto cells = split_csv_line(line);
    const std::string where = "row " + std::to_string(line_no);
    if (cells.size() != header.size())
      throw Error(where + ": expected " + std::to_string(header.size()) + " fields, got " +
                  std::to_string(cells.size()));
    UnitRecord u;
    u.id = trim(cells[*id_col]);
    if (u.id.empty()) throw Error(where + ": empty id");
    if (!ids.insert(u.id).second) throw Error(where + ": duplicate id '" + u.id + "'");

    const std::string m = lower(trim(cells[*membership_col]));
    if (m == "sample") {
      u.membership = Membership::sample;
    } else if (m == "population" || m == "population_only") {
      u.membership = Membership::population_only;
    } else {
      throw Error(where + ": membership must be 'sample' or 'population', got '" + m + "'");
    }

    const std::string t = trim(cells[*treatment_col]);
    if (!t.empty()) {
      if (u.membership != Membership::sample)
        throw Error(where + ": treatment present on a population row");
      if (t == "1") {
        u.treatment = Arm::treated;
      } else if (t == "0") {
        u.treatment = Arm::control;
      } else {
        throw Error(where + ": treatment must be 1, 0 or empty, got '" + t + "'");
      }
    } else if (u.membership == Membership::sample) {
      throw Error(where + ": sample row lacks treatment");
    }

    for (std::size_t o = 0; o < outcome_cols.size(); ++o) {
      const std::string& cell = cells[outcome_cols[o]];
      if (u.membership == Membership::sample) {
        auto v = parse_number(cell);
        if (!v) {
          if (trim(cell).empty())
            throw Error(where + ": sample row lacks outcome '" + outcome_names[o] + "'");
          throw Error(where + ": non-numeric outcome '" + outcome_names[o] + "'");
        }
        u.outcomes.push_back(*v);
      } else if (!trim(cell).empty()) {
        throw Error(where + ": outcome present on a population row");
      }
    }

    u.covariates.resize(schema.size());
    for (std::size_t k = 0; k < schema.size(); ++k) {
      auto v = parse_number(cells[*cov_cols[k]]);
      if (!v) {
        if (trim(cells[*cov_cols[k]]).empty())
          throw Error(where + ": missing value for '" + schema[k].name + "'");
        throw Error(where + ": non-numeric value for '" + schema[k].name + "'");
      }
      if (schema[k].kind == CovariateKind::binary && *v != 0.0 && *v != 1.0)
        throw Error(where + ": binary covariate '" + schema[k].name + "' must be 0 or 1");
      u.covariates[k] = *v;
    }
    units.push_back(std::move(u));
  }
  if (units.empty()) throw Error("no data rows");
  return UnitFrame(schema, std::move(outcome_names), std::move(units));
}

UnitFrame load_csv(const std::filesystem::path& path, const CovariateSchema& schema) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open data file " + path.string());
  return read_csv(in, schema);
}

void write_csv(std::ostream& out, const UnitFrame& frame) {
  out << "id,membership,treatment";
  for (const auto& o : frame.outcome_names()) out << ',' << csv_field("outcome:" + o);
  for (const auto& s : frame.schema().specs()) out << ',' << csv_field(s.name);
  out << '\n';
  for (const auto& u : frame.units()) {
    const bool sample = u.membership == Membership::sample;
    out << csv_field(u.id) << ',' << (sample ? "sample" : "population") << ',';
    if (u.treatment) out << (*u.treatment == Arm::treated ? '1' : '0');
    for (std::size_t o = 0; o < frame.outcome_names().size(); ++o) {
      out << ',';
      if (sample) out << format_number(u.outcomes[o]);
    }
    for (double v : u.covariates) out << ',' << format_number(v);
    out << '\n';
  }
}

// ---------------------------------------------------------------------------
// Summary and policy filters

std::vector<CovariateMeans> summarize(const UnitFrame& frame) {
  const std::size_t p = frame.schema().size();
  std::vector<double> sample_sum(p, 0.0), all_sum(p, 0.0);
  for (const auto& u : frame.units()) {
    for (std::size_t k = 0; k < p; ++k) {
      all_sum[k] += u.covariates[k];
      if (u.membership == Membership::sample) sample_sum[k] += u.covariates[k];
    }
  }
  std::vector<CovariateMeans> out;
  const double n = static_cast<double>(frame.sample_count());
  const double total = static_cast<double>(frame.size());
  for (std::size_t k = 0; k < p; ++k) {
    out.push_back({frame.schema()[k].name, n > 0 ? sample_sum[k] / n : 0.0,
                   total > 0 ? all_sum[k] / total : 0.0});
  }
  return out;
}

namespace {

struct ComparatorToken {
  std::string_view text;
  Comparator cmp;
};

constexpr std::array<ComparatorToken, 5> kComparators{{
    {"<=", Comparator::less_equal},
    {">=", Comparator::greater_equal},
    {"<", Comparator::less},
    {">", Comparator::greater},
    {"=", Comparator::equal},
}};

double parse_policy_number(const std::string& s, std::string_view context) {
  auto v = parse_number(s);
  if (!v) throw UsageError("policy '" + std::string(context) + "': bad number '" + s + "'");
  return *v;
}

}  // namespace

PolicyPredicate PolicyPredicate::parse(std::string_view text) {
  const std::string t = trim(text);
  PolicyPredicate p;
  if (auto at = t.find('@'); at != std::string::npos) {
    p.covariate = trim(t.substr(0, at));
    std::string range = trim(t.substr(at + 1));
    if (range.size() < 5 || range.front() != '[' || range.back() != ']')
      throw UsageError("policy '" + t + "': quantile range must look like [lo,hi]");
    range = range.substr(1, range.size() - 2);
    auto comma = range.find(',');
    if (comma == std::string::npos) throw UsageError("policy '" + t + "': quantile range needs two bounds");
    p.comparator = Comparator::in_quantile_range;
    p.quantile_range = {parse_policy_number(range.substr(0, comma), t),
                        parse_policy_number(range.substr(comma + 1), t)};
    auto [lo, hi] = p.quantile_range;
    if (lo < 0 || hi > 1 || lo > hi)
      throw UsageError("policy '" + t + "': quantile bounds must satisfy 0 <= lo <= hi <= 1");
  } else {
    bool found = false;
    for (const auto& tok : kComparators) {
      auto pos = t.find(tok.text);
      if (pos == std::string::npos || pos == 0) continue;
      p.covariate = trim(t.substr(0, pos));
      p.comparator = tok.cmp;
      p.threshold = parse_policy_number(trim(t.substr(pos + tok.text.size())), t);
      found = true;
      break;
    }
    if (!found) throw UsageError("policy '" + t + "': expected <name><op><value> or <name>@[lo,hi]");
  }
  if (p.covariate.empty()) throw UsageError("policy '" + t + "': missing covariate name");
  return p;
}

std::string PolicyPredicate::to_string() const {
  std::ostringstream os;
  os.imbue(std::locale::classic());
  os.precision(17);
  os << covariate;
  switch (comparator) {
    case Comparator::less: os << '<' << threshold; break;
    case Comparator::less_equal: os << "<=" << threshold; break;
    case Comparator::greater: os << '>' << threshold; break;
    case Comparator::greater_equal: os << ">=" << threshold; break;
    case Comparator::equal: os << '=' << threshold; break;
    case Comparator::in_quantile_range:
      os << "@[" << quantile_range.first << ',' << quantile_range.second << ']';
      break;
  }
  return os.str();
}

std::vector<PolicyPredicate> parse_policy(std::string_view text) {
  std::vector<PolicyPredicate> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    auto amp = text.find('&', start);
    auto piece = text.substr(start, amp == std::string_view::npos ? std::string_view::npos : amp - start);
    if (!trim(piece).empty()) out.push_back(PolicyPredicate::parse(piece));
    if (amp == std::string_view::npos) break;
    start = amp + 1;
  }
  if (out.empty()) throw UsageError("empty policy specification");
  return out;
}

Subpopulation filter_policy(const UnitFrame& frame, const std::vector<PolicyPredicate>& predicates,
                            std::string label) {
  const auto pop = frame.population_rows();
  std::vector<bool> keep(frame.size(), true);
  nlohmann::json prov = nlohmann::json::array();
  for (const auto& pred : predicates) {
    auto k = frame.schema().index_of(pred.covariate);
    if (!k) throw Error("policy: unknown covariate '" + pred.covariate + "'");
    double lo = 0, hi = 0;
    nlohmann::json entry = {{"predicate", pred.to_string()}};
    if (pred.comparator == Comparator::in_quantile_range) {
      if (pred.quantile_range.first < 0 || pred.quantile_range.second > 1 ||
          pred.quantile_range.first > pred.quantile_range.second)
        throw Error("policy: quantile bounds must lie in [0,1]");
      std::vector<double> values;
      values.reserve(pop.size());
      for (auto r : pop) values.push_back(frame[r].covariates[*k]);
      std::sort(values.begin(), values.end());
      if (values.empty()) throw Error("empty subpopulation");
      lo = stats::quantile_sorted(values, pred.quantile_range.first);
      hi = stats::quantile_sorted(values, pred.quantile_range.second);
      entry["value_range"] = {lo, hi};
    }
    for (auto r : pop) {
      const double v = frame[r].covariates[*k];
      bool ok = false;
      switch (pred.comparator) {
        case Comparator::less: ok = v < pred.threshold; break;
        case Comparator::less_equal: ok = v <= pred.threshold; break;
        case Comparator::greater: ok = v > pred.threshold; break;
        case Comparator::greater_equal: ok = v >= pred.threshold; break;
        case Comparator::equal: ok = v == pred.threshold; break;
        case Comparator::in_quantile_range: ok = v >= lo && v <= hi; break;
      }
      if (!ok) keep[r] = false;
    }
    prov.push_back(std::move(entry));
  }
  return Subpopulation::from_mask(frame, RedefinitionMethod::policy, std::move(label), keep,
                                  {{"predicates", prov}});
}

// ---------------------------------------------------------------------------
// Subpopulation

std::string_view to_string(RedefinitionMethod m) {
  switch (m) {
    case RedefinitionMethod::original: return "original";
    case RedefinitionMethod::crump: return "crump";
    case RedefinitionMethod::ps_minmax: return "ps_minmax";
    case RedefinitionMethod::ps_quantile: return "ps_quantile";
    case RedefinitionMethod::covariate_range: return "covariate_range";
    case RedefinitionMethod::policy: return "policy";
  }
  return "unknown";
}

Subpopulation Subpopulation::from_mask(const UnitFrame& frame, RedefinitionMethod method,
                                       std::string label, const std::vector<bool>& keep,
                                       nlohmann::json provenance) {
  Subpopulation s;
  s.method = method;
  s.label = std::move(label);
  s.provenance = std::move(provenance);
  for (std::size_t r = 0; r < frame.size(); ++r) {
    if (frame.is_sample(r) || keep[r]) {
      s.rows.push_back(r);
      s.retained_ids.push_back(frame[r].id);
      if (!frame.is_sample(r)) ++s.n0;
    }
  }
  if (s.n0 == 0) throw Error("empty subpopulation (" + s.label + ")");
  return s;
}

std::vector<std::size_t> Subpopulation::population_rows(const UnitFrame& frame) const {
  std::vector<std::size_t> out;
  out.reserve(n0);
  for (auto r : rows)
    if (!frame.is_sample(r)) out.push_back(r);
  return out;
}

void to_json(nlohmann::json& j, const Subpopulation& s) {
  j = {{"method", std::string(to_string(s.method))},
       {"label", s.label},
       {"n0", s.n0},
       {"provenance", s.provenance},
       {"retained_ids", s.retained_ids}};
}

Subpopulation original_population(const UnitFrame& frame) {
  return Subpopulation::from_mask(frame, RedefinitionMethod::original, "original",
                                  std::vector<bool>(frame.size(), true), nlohmann::json::object());
}

}  // namespace genpop
