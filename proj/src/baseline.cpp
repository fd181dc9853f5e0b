#include "modelmon/baseline.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <set>

#include "modelmon/errors.hpp"
#include "modelmon/report_json.hpp"
#include "modelmon/rng.hpp"

namespace modelmon {

namespace {

constexpr std::uint64_t kKllStream = 0x6b6c6c;
constexpr std::uint64_t kSampleStream = 0x736d70;

std::uint64_t fnv1a(std::string_view s) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::optional<double> parse_number(std::string_view cell) noexcept {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
  if (ec != std::errc{} || ptr != cell.data() + cell.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

nlohmann::ordered_json number_or_nan(const std::optional<double>& v) {
  if (v && std::isfinite(*v)) return *v;
  return "NaN";
}

const nlohmann::ordered_json& field(const nlohmann::ordered_json& obj, const char* name, const std::string& where) {
  if (!obj.is_object() || !obj.contains(name)) throw ParseError(where + ": missing field '" + name + "'");
  return obj.at(name);
}

template <typename T>
T typed_field(const nlohmann::ordered_json& obj, const char* name, const std::string& where) {
  try {
    return field(obj, name, where).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ParseError(where + ": field '" + name + "' has the wrong type");
  }
}

std::string drift_test_name(DriftTestKind k) { return k == DriftTestKind::ks ? "ks" : "linf"; }

DriftTestKind drift_test_from_string(const std::string& s) {
  if (s == "ks") return DriftTestKind::ks;
  if (s == "linf") return DriftTestKind::linf;
  throw ParseError("constraints: unknown drift test '" + s + "'");
}

std::string format_number(double v) { return nlohmann::json(v).dump(); }

}  // namespace

std::string to_string(ColumnType t) {
  switch (t) {
    case ColumnType::integral: return "Integral";
    case ColumnType::fractional: return "Fractional";
    case ColumnType::string: return "String";
  }
  return "String";
}

ColumnType column_type_from_string(const std::string& s) {
  if (s == "Integral") return ColumnType::integral;
  if (s == "Fractional") return ColumnType::fractional;
  if (s == "String") return ColumnType::string;
  throw ParseError("unknown column type '" + s + "'");
}

ColumnType join(ColumnType a, ColumnType b) noexcept { return std::max(a, b); }

bool is_null_token(std::string_view cell) noexcept {
  if (cell.empty()) return true;
  if (cell.size() != 4) return false;
  constexpr std::string_view null_word = "null";
  for (std::size_t i = 0; i < 4; ++i)
    if (std::tolower(static_cast<unsigned char>(cell[i])) != null_word[i]) return false;
  return true;
}

ColumnType classify_cell(std::string_view cell) noexcept {
  std::int64_t i = 0;
  const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), i);
  if (ec == std::errc{} && ptr == cell.data() + cell.size()) return ColumnType::integral;
  if (parse_number(cell)) return ColumnType::fractional;
  return ColumnType::string;
}

std::optional<double> ColumnProfile::completeness() const {
  if (rows() == 0) return std::nullopt;
  return static_cast<double>(non_null_count) / static_cast<double>(rows());
}

ColumnProfile make_column_profile(const std::string& name, const ProfileOptions& options) {
  ColumnProfile p;
  p.name = name;
  const std::uint64_t h = fnv1a(name);
  p.quantiles = make_kll(options.kll_k, mix_seed(options.seed, {h, kKllStream}));
  p.sample = make_reservoir<std::string>(options.sample_capacity, mix_seed(options.seed, {h, kSampleStream}));
  return p;
}

void observe_cell(ColumnProfile& p, std::string_view cell) {
  if (is_null_token(cell)) {
    ++p.missing_count;
    return;
  }
  ++p.non_null_count;
  const ColumnType t = classify_cell(cell);
  p.inferred_type = join(p.inferred_type, t);
  if (t != ColumnType::string) {
    const double v = *parse_number(cell);
    p.moments = moments_update(p.moments, v);
    kll_update_in_place(p.quantiles, v);
  }
  std::string value(cell);
  p.categories = categorical_update(std::move(p.categories), value);
  reservoir_update_in_place(p.sample, std::move(value));
}

ColumnProfile merge_profiles(const ColumnProfile& a, const ColumnProfile& b) {
  if (a.name != b.name) throw ValueError("merge_profiles: column '" + a.name + "' vs '" + b.name + "'");
  ColumnProfile out;
  out.name = a.name;
  out.inferred_type = join(a.inferred_type, b.inferred_type);
  out.non_null_count = a.non_null_count + b.non_null_count;
  out.missing_count = a.missing_count + b.missing_count;
  out.moments = moments_merge(a.moments, b.moments);
  out.categories = categorical_merge(a.categories, b.categories);
  out.quantiles = kll_merge(a.quantiles, b.quantiles);
  out.sample = reservoir_merge(a.sample, b.sample);
  return out;
}

std::vector<ColumnProfile> profile_dataset(const CsvTable& table, const ProfileOptions& options) {
  std::vector<ColumnProfile> out;
  out.reserve(table.header.size());
  for (const auto& name : table.header) out.push_back(make_column_profile(name, options));
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    if (row.size() != out.size())
      throw ParseError("csv row " + std::to_string(r + 1) + ": expected " + std::to_string(out.size()) + " fields");
    for (std::size_t c = 0; c < row.size(); ++c) observe_cell(out[c], row[c]);
  }
  return out;
}

std::vector<ColumnProfile> profile_csv(std::string_view text, const ProfileOptions& options) {
  return profile_dataset(parse_csv(text), options);
}

std::vector<ColumnProfile> merge_dataset_profiles(const std::vector<ColumnProfile>& a,
                                                  const std::vector<ColumnProfile>& b) {
  std::vector<ColumnProfile> out = a;
  for (const auto& pb : b) {
    auto it = std::find_if(out.begin(), out.end(), [&](const ColumnProfile& p) { return p.name == pb.name; });
    if (it == out.end()) out.push_back(pb);
    else *it = merge_profiles(*it, pb);
  }
  return out;
}

const ColumnProfile* Baseline::column(const std::string& name) const {
  for (const auto& c : columns)
    if (c.name == name) return &c;
  return nullptr;
}

Baseline suggest_baseline(const std::vector<ColumnProfile>& profiles, const DriftTestConfig& drift) {
  drift.validate();
  Baseline b;
  b.columns = profiles;
  for (const auto& p : profiles) {
    ColumnConstraint c;
    c.name = p.name;
    c.type = p.inferred_type;
    c.completeness = p.completeness().value_or(0.0);
    c.drift = drift;
    if (p.numeric()) {
      c.drift_test = DriftTestKind::ks;
    } else {
      c.drift_test = DriftTestKind::linf;
      std::vector<std::string> labels;
      for (const auto& [label, _] : p.categories.counts) labels.push_back(label);
      c.allowed_categories = std::move(labels);
    }
    b.constraints.push_back(std::move(c));
  }
  return b;
}

std::vector<Violation> validate_batch(const std::vector<ColumnProfile>& batch, const Baseline& baseline,
                                      const ValidationOptions& options) {
  auto find = [&](const std::string& name) -> const ColumnProfile* {
    for (const auto& p : batch)
      if (p.name == name) return &p;
    return nullptr;
  };

  std::vector<Violation> out;
  for (const auto& c : baseline.constraints) {
    const ColumnProfile* p = find(c.name);
    if (p == nullptr) {
      out.push_back({"missing_column_check", c.name, "Baseline column '" + c.name + "' is absent from the batch.",
                     nullptr, c.name});
      continue;
    }
    if (p->inferred_type > c.type) {
      out.push_back({"data_type_check", c.name,
                     "Column '" + c.name + "' has type " + to_string(p->inferred_type) + " but the baseline type is " +
                         to_string(c.type) + ".",
                     to_string(p->inferred_type), to_string(c.type)});
    }
    const auto completeness = p->completeness();
    if (completeness && *completeness < c.completeness - options.completeness_slack) {
      out.push_back({"completeness_check", c.name,
                     "Completeness " + format_number(*completeness) + " of column '" + c.name +
                         "' is below the baseline " + format_number(c.completeness) + ".",
                     *completeness, c.completeness});
    }
    if (c.allowed_categories) {
      const std::set<std::string> allowed(c.allowed_categories->begin(), c.allowed_categories->end());
      nlohmann::ordered_json unexpected = nlohmann::ordered_json::array();
      for (const auto& [label, _] : p->categories.counts)
        if (!allowed.contains(label)) unexpected.push_back(label);
      if (!unexpected.empty()) {
        out.push_back({"categorical_values_check", c.name,
                       "Column '" + c.name + "' has " + std::to_string(unexpected.size()) +
                           " value(s) outside the baseline categories.",
                       unexpected, *c.allowed_categories});
      }
    }
    const ColumnProfile* base = baseline.column(c.name);
    if (base == nullptr) continue;
    std::optional<DriftResult> drift;
    if (c.drift_test == DriftTestKind::ks) {
      if (p->numeric() && !p->quantiles.empty() && !base->quantiles.empty())
        drift = ks_test_eps(p->quantiles, base->quantiles, c.drift);
    } else if (p->categories.total > 0 && base->categories.total > 0) {
      drift = linf_categorical(p->categories, base->categories, c.drift);
    }
    if (drift && drift->drift_detected) {
      nlohmann::ordered_json observed{{"test", drift_test_name(c.drift_test)}, {"distance", drift->distance}};
      if (drift->p_value) observed["p_value"] = *drift->p_value;
      out.push_back({"baseline_drift_check", c.name,
                     "Distribution of column '" + c.name + "' drifted from the baseline (distance " +
                         format_number(drift->distance) + ").",
                     observed, {{"epsilon", c.drift.epsilon}, {"alpha", c.drift.alpha}}});
    }
  }
  for (const auto& p : batch) {
    const bool known = std::any_of(baseline.constraints.begin(), baseline.constraints.end(),
                                   [&](const ColumnConstraint& c) { return c.name == p.name; });
    if (!known)
      out.push_back({"extra_column_check", p.name, "Column '" + p.name + "' is not part of the baseline.", p.name,
                     nullptr});
  }
  return out;
}

nlohmann::ordered_json statistics_document(const std::vector<ColumnProfile>& profiles) {
  nlohmann::ordered_json features = nlohmann::ordered_json::array();
  std::uint64_t item_count = 0;
  for (const auto& p : profiles) {
    item_count = std::max(item_count, p.rows());
    nlohmann::ordered_json f;
    f["name"] = p.name;
    f["inferred_type"] = to_string(p.inferred_type);
    f["num_present"] = p.non_null_count;
    f["num_missing"] = p.missing_count;
    f["completeness"] = number_or_nan(p.completeness());
    if (p.numeric()) {
      const auto summary = moments_finalize(p.moments);
      f["numerical_statistics"] = {
          {"mean", number_or_nan(summary.mean)},
          {"std_dev", number_or_nan(summary.std)},
          {"min", p.quantiles.empty() ? nlohmann::ordered_json("NaN") : nlohmann::ordered_json(p.quantiles.min_value)},
          {"max", p.quantiles.empty() ? nlohmann::ordered_json("NaN") : nlohmann::ordered_json(p.quantiles.max_value)},
          {"moments", to_document(p.moments)},
          {"kll", kll_serialize(p.quantiles)}};
    } else {
      f["string_statistics"] = {{"distinct_count", p.categories.counts.size()},
                                {"categories", to_document(p.categories)}};
    }
    f["sample"] = to_document(p.sample);
    features.push_back(std::move(f));
  }
  nlohmann::ordered_json doc;
  doc["version"] = 0.0;
  doc["dataset"] = {{"item_count", item_count}};
  doc["features"] = std::move(features);
  return doc;
}

std::vector<ColumnProfile> profiles_from_statistics_document(const nlohmann::ordered_json& doc) {
  const auto& features = field(doc, "features", "statistics");
  if (!features.is_array()) throw ParseError("statistics: field 'features' is not an array");
  std::vector<ColumnProfile> out;
  for (const auto& f : features) {
    ColumnProfile p;
    p.name = typed_field<std::string>(f, "name", "statistics");
    const std::string where = "statistics feature '" + p.name + "'";
    p.inferred_type = column_type_from_string(typed_field<std::string>(f, "inferred_type", where));
    p.non_null_count = typed_field<std::uint64_t>(f, "num_present", where);
    p.missing_count = typed_field<std::uint64_t>(f, "num_missing", where);
    if (p.numeric()) {
      const auto& stats = field(f, "numerical_statistics", where);
      p.moments = moments_from_document(nlohmann::json(field(stats, "moments", where)));
      p.quantiles = kll_deserialize(nlohmann::json(field(stats, "kll", where)));
    } else {
      const auto& stats = field(f, "string_statistics", where);
      p.categories = categorical_from_document(nlohmann::json(field(stats, "categories", where)));
    }
    p.sample = reservoir_from_document<std::string>(nlohmann::json(field(f, "sample", where)));
    out.push_back(std::move(p));
  }
  return out;
}

nlohmann::ordered_json constraints_document(const std::vector<ColumnConstraint>& constraints) {
  nlohmann::ordered_json features = nlohmann::ordered_json::array();
  for (const auto& c : constraints) {
    nlohmann::ordered_json f;
    f["name"] = c.name;
    f["inferred_type"] = to_string(c.type);
    f["completeness"] = c.completeness;
    if (c.allowed_categories) f["categorical_values"] = *c.allowed_categories;
    f["drift_check"] = {{"test", drift_test_name(c.drift_test)}, {"epsilon", c.drift.epsilon}, {"alpha", c.drift.alpha}};
    features.push_back(std::move(f));
  }
  nlohmann::ordered_json doc;
  doc["version"] = 0.0;
  doc["features"] = std::move(features);
  return doc;
}

std::vector<ColumnConstraint> column_constraints_from_document(const nlohmann::ordered_json& doc) {
  const auto& features = field(doc, "features", "constraints");
  if (!features.is_array()) throw ParseError("constraints: field 'features' is not an array");
  std::vector<ColumnConstraint> out;
  for (const auto& f : features) {
    ColumnConstraint c;
    c.name = typed_field<std::string>(f, "name", "constraints");
    const std::string where = "constraints feature '" + c.name + "'";
    c.type = column_type_from_string(typed_field<std::string>(f, "inferred_type", where));
    c.completeness = typed_field<double>(f, "completeness", where);
    if (f.contains("categorical_values"))
      c.allowed_categories = typed_field<std::vector<std::string>>(f, "categorical_values", where);
    const auto& d = field(f, "drift_check", where);
    c.drift_test = drift_test_from_string(typed_field<std::string>(d, "test", where + " drift_check"));
    c.drift.epsilon = typed_field<double>(d, "epsilon", where + " drift_check");
    c.drift.alpha = typed_field<double>(d, "alpha", where + " drift_check");
    try {
      c.drift.validate();
    } catch (const ConfigError& e) {
      throw ParseError(where + ": " + e.what());
    }
    out.push_back(std::move(c));
  }
  return out;
}

nlohmann::ordered_json violations_document(const std::vector<Violation>& violations) {
  nlohmann::ordered_json list = nlohmann::ordered_json::array();
  for (const auto& v : violations) {
    nlohmann::ordered_json j;
    j["check_name"] = v.check_name;
    if (v.column) j["column"] = *v.column;
    j["description"] = v.description;
    j["observed"] = v.observed;
    j["expected"] = v.expected;
    list.push_back(std::move(j));
  }
  nlohmann::ordered_json doc;
  doc["version"] = 0.0;
  doc["violations"] = std::move(list);
  return doc;
}

void save_baseline(const Baseline& baseline, const std::filesystem::path& dir) {
  write_json_file(dir / kStatisticsFile, statistics_document(baseline.columns));
  write_json_file(dir / kConstraintsFile, constraints_document(baseline.constraints));
}

Baseline load_baseline(const std::filesystem::path& dir) {
  Baseline b;
  b.columns = profiles_from_statistics_document(read_json_file(dir / kStatisticsFile));
  b.constraints = column_constraints_from_document(read_json_file(dir / kConstraintsFile));
  return b;
}

}  // namespace modelmon
