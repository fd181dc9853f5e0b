#pragma once

// Column profiling, baseline suggestion and batch validation with the six
// schema and drift checks.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "modelmon/csv.hpp"
#include "modelmon/drift.hpp"
#include "modelmon/kll.hpp"
#include "modelmon/sketches.hpp"

namespace modelmon {

/// Type lattice, ordered: integral < fractional < string.
enum class ColumnType { integral = 0, fractional = 1, string = 2 };

[[nodiscard]] std::string to_string(ColumnType t);
[[nodiscard]] ColumnType column_type_from_string(const std::string& s);
[[nodiscard]] ColumnType join(ColumnType a, ColumnType b) noexcept;

/// "" and "null" in any case.
[[nodiscard]] bool is_null_token(std::string_view cell) noexcept;
/// Narrowest type the cell parses as (non-null cells only).
[[nodiscard]] ColumnType classify_cell(std::string_view cell) noexcept;

inline constexpr std::size_t kDefaultProfileSampleSize = 100;

struct ProfileOptions {
  std::uint32_t kll_k = kDefaultKllK;
  std::size_t sample_capacity = kDefaultProfileSampleSize;
  std::uint64_t seed = 0;
};

/// Every sketch is kept while profiling so chunk profiles merge exactly; only
/// the ones that fit the inferred type are written out. The inferred type is
/// the lattice join of all non-null cells, so one string demotes a column.
struct ColumnProfile {
  std::string name;
  ColumnType inferred_type = ColumnType::integral;  // bottom when no value was seen
  std::uint64_t non_null_count = 0;
  std::uint64_t missing_count = 0;
  MomentsState moments;               // numeric cells
  CategoricalCountState categories;   // all non-null cells
  KllState quantiles;                 // numeric cells
  ReservoirState<std::string> sample;

  [[nodiscard]] bool numeric() const noexcept { return inferred_type != ColumnType::string; }
  [[nodiscard]] std::uint64_t rows() const noexcept { return non_null_count + missing_count; }
  /// non_null / rows; empty for a column with no rows.
  [[nodiscard]] std::optional<double> completeness() const;
};

[[nodiscard]] ColumnProfile make_column_profile(const std::string& name, const ProfileOptions& options = {});
void observe_cell(ColumnProfile& profile, std::string_view cell);
/// Throws ValueError when the names differ.
[[nodiscard]] ColumnProfile merge_profiles(const ColumnProfile& a, const ColumnProfile& b);

/// One profile per header column, in header order.
[[nodiscard]] std::vector<ColumnProfile> profile_dataset(const CsvTable& table, const ProfileOptions& options = {});
[[nodiscard]] std::vector<ColumnProfile> profile_csv(std::string_view text, const ProfileOptions& options = {});
/// Column-wise merge; columns present on one side only are carried over.
[[nodiscard]] std::vector<ColumnProfile> merge_dataset_profiles(const std::vector<ColumnProfile>& a,
                                                                const std::vector<ColumnProfile>& b);

enum class DriftTestKind { ks, linf };

struct ColumnConstraint {
  std::string name;
  ColumnType type = ColumnType::integral;
  double completeness = 1.0;
  std::optional<std::vector<std::string>> allowed_categories;  // string columns
  DriftTestKind drift_test = DriftTestKind::ks;
  DriftTestConfig drift;
};

struct Baseline {
  std::vector<ColumnProfile> columns;
  std::vector<ColumnConstraint> constraints;

  [[nodiscard]] const ColumnProfile* column(const std::string& name) const;
};

[[nodiscard]] Baseline suggest_baseline(const std::vector<ColumnProfile>& profiles, const DriftTestConfig& drift = {});

struct Violation {
  std::string check_name;
  std::optional<std::string> column;
  std::string description;
  nlohmann::ordered_json observed;
  nlohmann::ordered_json expected;
};

struct ValidationOptions {
  double completeness_slack = 0.0;  // violation iff observed < threshold - slack
};

[[nodiscard]] std::vector<Violation> validate_batch(const std::vector<ColumnProfile>& batch, const Baseline& baseline,
                                                    const ValidationOptions& options = {});

// ---------------------------------------------------------------------------
// Documents

[[nodiscard]] nlohmann::ordered_json statistics_document(const std::vector<ColumnProfile>& profiles);
[[nodiscard]] std::vector<ColumnProfile> profiles_from_statistics_document(const nlohmann::ordered_json& doc);
[[nodiscard]] nlohmann::ordered_json constraints_document(const std::vector<ColumnConstraint>& constraints);
[[nodiscard]] std::vector<ColumnConstraint> column_constraints_from_document(const nlohmann::ordered_json& doc);
[[nodiscard]] nlohmann::ordered_json violations_document(const std::vector<Violation>& violations);

inline constexpr const char* kStatisticsFile = "statistics.json";
inline constexpr const char* kConstraintsFile = "constraints.json";
inline constexpr const char* kViolationsFile = "constraint_violations.json";

/// Writes statistics.json and constraints.json into `dir`.
void save_baseline(const Baseline& baseline, const std::filesystem::path& dir);
[[nodiscard]] Baseline load_baseline(const std::filesystem::path& dir);

}  // namespace modelmon
