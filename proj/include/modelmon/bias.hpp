#pragma once

// Bias metrics over a two-valued sensitive facet, the bootstrap alarm rule,
// and the alarm-rate study that evaluates it on synthetic populations.

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "modelmon/quality.hpp"

namespace modelmon {

enum class Facet { advantaged, disadvantaged };

struct FacetedRow {
  int label = 0;                  // observed label, 0 or 1
  std::optional<int> prediction;  // model output, 0 or 1
  Facet facet = Facet::advantaged;
};

struct FacetedBatch {
  std::vector<FacetedRow> rows;
};

using BiasMetric = std::function<double(std::span<const FacetedRow>)>;

/// Difference in positive proportions in observed labels, q_adv - q_dis.
/// Throws InsufficientDataError when a facet group is empty.
[[nodiscard]] double dpl(std::span<const FacetedRow> rows);

/// accuracy(adv) - accuracy(dis). Throws ValueError when a prediction is
/// missing, InsufficientDataError when a facet group is empty.
[[nodiscard]] double accuracy_difference(std::span<const FacetedRow> rows);

struct AcceptableRange {
  double low = 0.0;
  double high = 0.0;
};

struct BiasAlarmConfig {
  AcceptableRange range;
  std::size_t n_boot = 5;
  std::size_t sample_cap = 200;
  double resample_frac = 0.8;
  std::uint64_t seed = 0;

  /// Throws ConfigError on low > high or an invalid bootstrap setting.
  void validate() const;
  [[nodiscard]] BootstrapConfig bootstrap() const;
};

struct AlarmDecision {
  double metric_value = 0.0;
  double bootstrap_stddev = 0.0;  // 0 when the bootstrap is undefined
  bool alarm = false;
};

/// value > high + stddev or value < low - stddev.
[[nodiscard]] bool alarm_rule(double value, double stddev, const AcceptableRange& range);

/// Metric on the first min(|rows|, sample_cap) rows, stddev from the shared
/// bootstrap procedure.
[[nodiscard]] AlarmDecision bias_alarm(std::span<const FacetedRow> rows, const BiasMetric& metric,
                                       const BiasAlarmConfig& cfg);

/// Population with exact per-facet positive counts, so its DPL is known.
struct SyntheticPopulation {
  std::size_t advantaged = 10000;
  std::size_t advantaged_positive = 1130;
  std::size_t disadvantaged = 10000;
  std::size_t disadvantaged_positive = 3120;

  [[nodiscard]] double true_dpl() const;
  /// Rows interleaved deterministically by a seeded shuffle.
  [[nodiscard]] FacetedBatch build(std::uint64_t seed) const;
};

struct CaseStudyConfig {
  std::string label;
  AcceptableRange range;
};

/// The no-bias, medium-bias and high-bias ranges for a metric value b:
/// [1.1b, -1.1b], [0.55b, -0.55b] and [0, 0] (endpoints ordered).
[[nodiscard]] std::vector<CaseStudyConfig> standard_case_study_configs(double b);

struct CaseStudyCell {
  std::string config_label;
  AcceptableRange range;
  std::size_t sample_size = 0;
  std::size_t repeats = 0;
  std::size_t alarms = 0;
  [[nodiscard]] double alarm_fraction() const;
  /// Fraction of runs whose decision matches whether b lies outside the range.
  [[nodiscard]] double decision_accuracy(double b) const;
};

struct CaseStudyOptions {
  std::size_t repeats = 100;
  std::size_t n_boot = 5;
  double resample_frac = 0.8;
  std::uint64_t seed = 0;
};

/// For every (config, sample size) draws `repeats` samples without
/// replacement from the population and runs the DPL alarm with the bootstrap
/// cap equal to the sample size.
[[nodiscard]] std::vector<CaseStudyCell> bias_case_study(const FacetedBatch& population,
                                                         const std::vector<CaseStudyConfig>& configs,
                                                         const std::vector<std::size_t>& sample_sizes,
                                                         const CaseStudyOptions& options);

[[nodiscard]] std::string case_study_csv(const std::vector<CaseStudyCell>& cells);

}  // namespace modelmon
