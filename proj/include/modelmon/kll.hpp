#pragma once

// KLL streaming quantile sketch (compactor-only variant).
//
// Level h holds items of weight 2^h. Level capacities follow the geometric
// schedule max(2, ceil(k * (2/3)^(H-1-h))) where H is the number of levels, so
// the top level holds up to k items. Compaction is lazy: only when the total
// number of stored items exceeds the total capacity is the lowest level that
// has reached its own capacity sorted, and every other item promoted to the
// next level.
//
// Which half survives (odd or even positions) is anti-correlated per level:
// the first compaction of level h uses a coin derived from (seed, h) and each
// later compaction of that level flips it. Errors of successive compactions
// therefore tend to cancel. The per-level compaction counts are part of the
// state, so the sketch is fully described by its fields and serializes to
// JSON.

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include <json.hpp>

namespace modelmon {

inline constexpr std::uint32_t kDefaultKllK = 200;
inline constexpr std::size_t kDefaultHistogramBins = 20;

struct KllState {
  std::uint32_t k = kDefaultKllK;
  std::vector<std::vector<double>> levels;
  std::uint64_t n = 0;
  double min_value = 0.0;  // meaningful only when n > 0
  double max_value = 0.0;
  std::uint64_t rng_seed = 0;
  std::vector<std::uint64_t> compactions;  // per level

  [[nodiscard]] bool empty() const noexcept { return n == 0; }
  friend bool operator==(const KllState&, const KllState&) = default;
};

struct Histogram {
  std::vector<double> bin_edges;   // ascending; size = bins + 1 (2 for the degenerate bin)
  std::vector<double> bin_masses;  // first bin closed [e0, e1], the rest (e_i, e_i+1]
  double total = 0.0;
};

[[nodiscard]] KllState make_kll(std::uint32_t k = kDefaultKllK, std::uint64_t seed = 0);

/// Capacity of level h in a sketch with num_levels levels.
[[nodiscard]] std::size_t kll_level_capacity(std::uint32_t k, std::size_t level, std::size_t num_levels);

[[nodiscard]] std::size_t kll_total_capacity(const KllState& sketch);
[[nodiscard]] std::size_t kll_num_retained(const KllState& sketch);

/// Documented single-sketch normalized rank error bound used by callers that
/// widen tolerances for sketch approximation (k = 200 gives 0.01).
[[nodiscard]] double kll_rank_error_bound(std::uint32_t k) noexcept;

/// Throws ValueError for non-finite x.
void kll_update_in_place(KllState& sketch, double x);
[[nodiscard]] KllState kll_update(KllState sketch, double x);

/// Throws ValueError when k differs.
[[nodiscard]] KllState kll_merge(const KllState& a, const KllState& b);

/// Fraction of items <= x. Throws InsufficientDataError on an empty sketch.
[[nodiscard]] double kll_rank(const KllState& sketch, double x);
/// Stored value whose cumulative weight first reaches phi * n.
[[nodiscard]] double kll_quantile(const KllState& sketch, double phi);
[[nodiscard]] Histogram kll_histogram(const KllState& sketch, std::size_t num_bins = kDefaultHistogramBins);

/// Weighted, sorted snapshot of a sketch for repeated rank/quantile queries.
class KllSortedView {
 public:
  explicit KllSortedView(const KllState& sketch);

  [[nodiscard]] double rank(double x) const;  // fraction of items <= x
  [[nodiscard]] std::uint64_t weight_at_or_below(double x) const;
  [[nodiscard]] double quantile(double phi) const;
  [[nodiscard]] std::uint64_t n() const noexcept { return n_; }
  /// Distinct stored values in ascending order.
  [[nodiscard]] std::vector<double> cut_points() const;

 private:
  std::vector<double> values_;
  std::vector<std::uint64_t> cumulative_;  // cumulative weight through values_[i]
  std::uint64_t n_ = 0;
  double min_ = 0.0;
  double max_ = 0.0;
};

[[nodiscard]] nlohmann::json kll_serialize(const KllState& sketch);
/// Throws ParseError naming the offending field.
[[nodiscard]] KllState kll_deserialize(const nlohmann::json& doc);

}  // namespace modelmon
