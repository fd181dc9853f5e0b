#pragma once

// Model-quality metrics, bootstrap standard deviations, and the threshold
// constraints a monitoring job evaluates against a baseline.

#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "modelmon/errors.hpp"
#include "modelmon/rng.hpp"
#include "modelmon/time.hpp"

namespace modelmon {

struct LabeledRow {
  double prediction = 0.0;
  double label = 0.0;
  std::optional<double> score;  // classifier score, needed only for AUC
};

struct LabeledBatch {
  std::vector<LabeledRow> rows;
  UtcTime start_time{};
  UtcTime end_time{};
};

/// An empty optional stands for an undefined value, serialized as "NaN".
struct MetricValue {
  std::optional<double> value;
  std::optional<double> standard_deviation;
};

/// Metrics in report order.
using MetricList = std::vector<std::pair<std::string, MetricValue>>;

[[nodiscard]] const MetricValue* find_metric(const MetricList& metrics, const std::string& name);

enum class ProblemType { regression, binary_classification };

[[nodiscard]] std::string to_string(ProblemType p);
[[nodiscard]] ProblemType problem_type_from_string(const std::string& s);

// ---------------------------------------------------------------------------
// Metric functions over a span of rows. All throw InsufficientDataError on an
// empty span; undefined results are empty optionals.

using RowMetric = std::function<std::optional<double>(std::span<const LabeledRow>)>;

[[nodiscard]] std::optional<double> mean_absolute_error(std::span<const LabeledRow> rows);
[[nodiscard]] std::optional<double> mean_squared_error(std::span<const LabeledRow> rows);
[[nodiscard]] std::optional<double> root_mean_squared_error(std::span<const LabeledRow> rows);
/// 1 - SSres / SStot; undefined when the labels have zero variance.
[[nodiscard]] std::optional<double> r_squared(std::span<const LabeledRow> rows);

struct ConfusionMatrix {
  std::uint64_t tp = 0, fp = 0, tn = 0, fn = 0;
};

/// Throws ValueError when a label or prediction is not 0/1.
[[nodiscard]] ConfusionMatrix confusion_matrix(std::span<const LabeledRow> rows);
/// (1 + b^2) P R / (b^2 P + R), 0 when the denominator is 0.
[[nodiscard]] double f_beta(const ConfusionMatrix& cm, double beta);
[[nodiscard]] double precision(const ConfusionMatrix& cm);
[[nodiscard]] double recall(const ConfusionMatrix& cm);
/// Mann-Whitney AUC with midranks for ties; undefined when a class is absent
/// or a row has no score.
[[nodiscard]] std::optional<double> area_under_curve(std::span<const LabeledRow> rows);

/// Named metric functions for a problem type, in report order.
[[nodiscard]] std::vector<std::pair<std::string, RowMetric>> standard_metrics(ProblemType problem, double beta = 1.0);

/// mae, mse, rmse, r2 (values only).
[[nodiscard]] MetricList regression_metrics(const LabeledBatch& batch);
/// accuracy, precision, recall, f0_5, f1, f2, [fbeta], auc (values only).
[[nodiscard]] MetricList classification_metrics(const LabeledBatch& batch, double beta = 1.0);

// ---------------------------------------------------------------------------
// Bootstrap

struct BootstrapConfig {
  std::size_t n_boot = 5;
  double resample_frac = 0.8;
  std::size_t sample_cap = 200;
  std::uint64_t seed = 0;

  void validate() const {
    if (n_boot < 2) throw ConfigError("bootstrap: n_boot must be at least 2");
    if (!(resample_frac > 0.0 && resample_frac <= 1.0)) throw ConfigError("bootstrap: resample_frac must lie in (0, 1]");
    if (sample_cap == 0) throw ConfigError("bootstrap: sample_cap must be positive");
  }
};

/// Sample standard deviation (n_boot - 1 denominator) of a metric over
/// bootstrap replicates. The first min(|rows|, sample_cap) rows enter; each
/// replicate draws ceil(resample_frac * m) of them with replacement from a
/// generator seeded by (seed, replicate index). Any undefined replicate (empty
/// optional or InsufficientDataError) makes the result undefined.
template <typename Row, typename Metric>
[[nodiscard]] std::optional<double> bootstrap_stddev(std::span<const Row> rows, Metric&& metric,
                                                     const BootstrapConfig& cfg) {
  cfg.validate();
  const std::size_t m = std::min(rows.size(), cfg.sample_cap);
  if (m == 0) return std::nullopt;
  const auto pool = rows.first(m);
  const auto draws = static_cast<std::size_t>(std::ceil(cfg.resample_frac * static_cast<double>(m)));

  std::vector<double> replicates;
  replicates.reserve(cfg.n_boot);
  std::vector<Row> resample(draws);
  for (std::size_t r = 0; r < cfg.n_boot; ++r) {
    std::mt19937_64 gen(mix_seed(cfg.seed, {r}));
    for (auto& row : resample) row = pool[bounded(gen(), m)];
    std::optional<double> value;
    try {
      value = metric(std::span<const Row>(resample));
    } catch (const InsufficientDataError&) {
      return std::nullopt;
    }
    if (!value || !std::isfinite(*value)) return std::nullopt;
    replicates.push_back(*value);
  }

  double mean = 0.0;
  for (double v : replicates) mean += v;
  mean /= static_cast<double>(replicates.size());
  double ss = 0.0;
  for (double v : replicates) ss += (v - mean) * (v - mean);
  return std::sqrt(ss / static_cast<double>(replicates.size() - 1));
}

/// Standard metrics with bootstrap standard deviations.
[[nodiscard]] MetricList quality_metrics(const LabeledBatch& batch, ProblemType problem, const BootstrapConfig& cfg,
                                         double beta = 1.0);

// ---------------------------------------------------------------------------
// Constraints

enum class ComparisonOperator { GreaterThanThreshold, LessThanThreshold };

[[nodiscard]] std::string to_string(ComparisonOperator op);
[[nodiscard]] ComparisonOperator comparison_operator_from_string(const std::string& s);

struct QualityConstraint {
  double threshold = 0.0;
  ComparisonOperator comparison_operator = ComparisonOperator::GreaterThanThreshold;
};

struct QualityConstraints {
  ProblemType problem = ProblemType::regression;
  std::vector<std::pair<std::string, QualityConstraint>> metrics;
};

/// Error-like metrics (mae, mse, rmse) alert when they grow; score-like
/// metrics alert when they shrink. Undefined baseline values get no constraint.
[[nodiscard]] QualityConstraints suggest_quality_constraints(const MetricList& baseline_report, ProblemType problem);

struct QualityViolation {
  std::string metric;
  std::optional<double> value;  // empty when the metric is missing from the report
  double threshold = 0.0;
  std::optional<double> standard_deviation;
  ComparisonOperator comparison_operator = ComparisonOperator::GreaterThanThreshold;
  bool missing = false;
};

/// GreaterThan violated iff value > threshold + stddev; LessThan iff
/// value < threshold - stddev. An undefined stddev counts as 0. Undefined
/// values are not compared.
[[nodiscard]] std::vector<QualityViolation> evaluate_quality_constraints(const MetricList& report,
                                                                         const QualityConstraints& constraints);

// ---------------------------------------------------------------------------
// Documents

struct DatasetInfo {
  std::uint64_t item_count = 0;
  UtcTime start_time{};
  UtcTime end_time{};
  UtcTime evaluation_time{};
};

[[nodiscard]] std::string metrics_section_name(ProblemType problem);
[[nodiscard]] std::string constraints_section_name(ProblemType problem);

/// {"version":0.0, "dataset":{...}, "<problem>_metrics":{m:{"value","standard_deviation"}}}.
[[nodiscard]] nlohmann::ordered_json quality_report_document(const DatasetInfo& dataset, ProblemType problem,
                                                             const MetricList& metrics,
                                                             const std::optional<ConfusionMatrix>& confusion = {});
[[nodiscard]] nlohmann::ordered_json constraints_document(const QualityConstraints& constraints);
[[nodiscard]] QualityConstraints constraints_from_document(const nlohmann::ordered_json& doc);
[[nodiscard]] MetricList metrics_from_report_document(const nlohmann::ordered_json& doc, ProblemType problem);

}  // namespace modelmon
