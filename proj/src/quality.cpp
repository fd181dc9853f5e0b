#include "modelmon/quality.hpp"

#include <algorithm>
#include <numeric>

#include <Eigen/Core>

namespace modelmon {

namespace {

void require_rows(std::span<const LabeledRow> rows, const char* what) {
  if (rows.empty()) throw InsufficientDataError(std::string(what) + ": empty batch");
}

Eigen::VectorXd residuals(std::span<const LabeledRow> rows) {
  Eigen::VectorXd r(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) r[static_cast<Eigen::Index>(i)] = rows[i].prediction - rows[i].label;
  return r;
}

bool is_binary(double v) { return v == 0.0 || v == 1.0; }

nlohmann::ordered_json number_or_nan(const std::optional<double>& v) {
  if (v && std::isfinite(*v)) return *v;
  return "NaN";
}

std::optional<double> optional_number(const nlohmann::ordered_json& j, const std::string& where) {
  if (j.is_number()) return j.get<double>();
  if (j.is_string() && j.get<std::string>() == "NaN") return std::nullopt;
  throw ParseError(where + ": expected a number or \"NaN\"");
}

}  // namespace

const MetricValue* find_metric(const MetricList& metrics, const std::string& name) {
  for (const auto& [n, v] : metrics)
    if (n == name) return &v;
  return nullptr;
}

std::string to_string(ProblemType p) {
  return p == ProblemType::regression ? "regression" : "binary_classification";
}

ProblemType problem_type_from_string(const std::string& s) {
  if (s == "regression") return ProblemType::regression;
  if (s == "binary_classification") return ProblemType::binary_classification;
  throw ConfigError("unknown problem type '" + s + "'");
}

std::optional<double> mean_absolute_error(std::span<const LabeledRow> rows) {
  require_rows(rows, "mae");
  return residuals(rows).cwiseAbs().sum() / static_cast<double>(rows.size());
}

std::optional<double> mean_squared_error(std::span<const LabeledRow> rows) {
  require_rows(rows, "mse");
  return residuals(rows).squaredNorm() / static_cast<double>(rows.size());
}

std::optional<double> root_mean_squared_error(std::span<const LabeledRow> rows) {
  return std::sqrt(*mean_squared_error(rows));
}

std::optional<double> r_squared(std::span<const LabeledRow> rows) {
  require_rows(rows, "r2");
  double label_mean = 0.0;
  for (const auto& r : rows) label_mean += r.label;
  label_mean /= static_cast<double>(rows.size());
  double ss_tot = 0.0;
  for (const auto& r : rows) ss_tot += (r.label - label_mean) * (r.label - label_mean);
  if (ss_tot == 0.0) return std::nullopt;
  // SSres is the square of the residual L2 norm (not the plain sum of
  // squares); this is the rounding the reference reports carry.
  const double norm = residuals(rows).norm();
  return 1.0 - norm * norm / ss_tot;
}

ConfusionMatrix confusion_matrix(std::span<const LabeledRow> rows) {
  ConfusionMatrix cm;
  for (const auto& r : rows) {
    if (!is_binary(r.label) || !is_binary(r.prediction))
      throw ValueError("classification metrics: labels and predictions must be 0 or 1");
    const bool actual = r.label == 1.0;
    const bool predicted = r.prediction == 1.0;
    if (actual && predicted) ++cm.tp;
    else if (!actual && predicted) ++cm.fp;
    else if (!actual) ++cm.tn;
    else ++cm.fn;
  }
  return cm;
}

double precision(const ConfusionMatrix& cm) {
  const auto denom = cm.tp + cm.fp;
  return denom == 0 ? 0.0 : static_cast<double>(cm.tp) / static_cast<double>(denom);
}

double recall(const ConfusionMatrix& cm) {
  const auto denom = cm.tp + cm.fn;
  return denom == 0 ? 0.0 : static_cast<double>(cm.tp) / static_cast<double>(denom);
}

double f_beta(const ConfusionMatrix& cm, double beta) {
  const double p = precision(cm);
  const double r = recall(cm);
  const double b2 = beta * beta;
  const double denom = b2 * p + r;
  return denom == 0.0 ? 0.0 : (1.0 + b2) * p * r / denom;
}

std::optional<double> area_under_curve(std::span<const LabeledRow> rows) {
  require_rows(rows, "auc");
  std::vector<std::pair<double, bool>> scored;
  scored.reserve(rows.size());
  for (const auto& r : rows) {
    if (!is_binary(r.label)) throw ValueError("auc: labels must be 0 or 1");
    if (!r.score) return std::nullopt;
    scored.emplace_back(*r.score, r.label == 1.0);
  }
  std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) { return a.first < b.first; });

  double positive_rank_sum = 0.0;
  std::uint64_t positives = 0;
  for (std::size_t i = 0; i < scored.size();) {
    std::size_t j = i;
    while (j < scored.size() && scored[j].first == scored[i].first) ++j;
    const double midrank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (std::size_t t = i; t < j; ++t)
      if (scored[t].second) {
        positive_rank_sum += midrank;
        ++positives;
      }
    i = j;
  }
  const std::uint64_t negatives = scored.size() - positives;
  if (positives == 0 || negatives == 0) return std::nullopt;
  const double np = static_cast<double>(positives);
  return (positive_rank_sum - np * (np + 1.0) / 2.0) / (np * static_cast<double>(negatives));
}

std::vector<std::pair<std::string, RowMetric>> standard_metrics(ProblemType problem, double beta) {
  if (problem == ProblemType::regression) {
    return {{"mae", mean_absolute_error},
            {"mse", mean_squared_error},
            {"rmse", root_mean_squared_error},
            {"r2", r_squared}};
  }
  auto with_counts = [](auto f) {
    return RowMetric([f](std::span<const LabeledRow> rows) -> std::optional<double> {
      require_rows(rows, "classification metrics");
      return f(confusion_matrix(rows), rows.size());
    });
  };
  std::vector<std::pair<std::string, RowMetric>> out{
      {"accuracy", with_counts([](const ConfusionMatrix& cm, std::size_t n) {
         return static_cast<double>(cm.tp + cm.tn) / static_cast<double>(n);
       })},
      {"precision", with_counts([](const ConfusionMatrix& cm, std::size_t) { return precision(cm); })},
      {"recall", with_counts([](const ConfusionMatrix& cm, std::size_t) { return recall(cm); })},
      {"f0_5", with_counts([](const ConfusionMatrix& cm, std::size_t) { return f_beta(cm, 0.5); })},
      {"f1", with_counts([](const ConfusionMatrix& cm, std::size_t) { return f_beta(cm, 1.0); })},
      {"f2", with_counts([](const ConfusionMatrix& cm, std::size_t) { return f_beta(cm, 2.0); })},
  };
  if (beta != 0.5 && beta != 1.0 && beta != 2.0)
    out.emplace_back("fbeta", with_counts([beta](const ConfusionMatrix& cm, std::size_t) { return f_beta(cm, beta); }));
  out.emplace_back("auc", area_under_curve);
  return out;
}

namespace {

MetricList evaluate(const LabeledBatch& batch, ProblemType problem, double beta) {
  const std::span<const LabeledRow> rows(batch.rows);
  MetricList out;
  for (const auto& [name, metric] : standard_metrics(problem, beta)) out.emplace_back(name, MetricValue{metric(rows), {}});
  return out;
}

}  // namespace

MetricList regression_metrics(const LabeledBatch& batch) { return evaluate(batch, ProblemType::regression, 1.0); }

MetricList classification_metrics(const LabeledBatch& batch, double beta) {
  return evaluate(batch, ProblemType::binary_classification, beta);
}

MetricList quality_metrics(const LabeledBatch& batch, ProblemType problem, const BootstrapConfig& cfg, double beta) {
  const std::span<const LabeledRow> rows(batch.rows);
  MetricList out;
  for (const auto& [name, metric] : standard_metrics(problem, beta)) {
    MetricValue v;
    v.value = metric(rows);
    v.standard_deviation = bootstrap_stddev(rows, metric, cfg);
    out.emplace_back(name, v);
  }
  return out;
}

std::string to_string(ComparisonOperator op) {
  return op == ComparisonOperator::GreaterThanThreshold ? "GreaterThanThreshold" : "LessThanThreshold";
}

ComparisonOperator comparison_operator_from_string(const std::string& s) {
  if (s == "GreaterThanThreshold") return ComparisonOperator::GreaterThanThreshold;
  if (s == "LessThanThreshold") return ComparisonOperator::LessThanThreshold;
  throw ParseError("unknown comparison_operator '" + s + "'");
}

QualityConstraints suggest_quality_constraints(const MetricList& baseline_report, ProblemType problem) {
  QualityConstraints out;
  out.problem = problem;
  for (const auto& [name, metric] : baseline_report) {
    if (!metric.value || !std::isfinite(*metric.value)) continue;
    const bool error_like = name == "mae" || name == "mse" || name == "rmse";
    out.metrics.emplace_back(name, QualityConstraint{*metric.value, error_like ? ComparisonOperator::GreaterThanThreshold
                                                                                : ComparisonOperator::LessThanThreshold});
  }
  return out;
}

std::vector<QualityViolation> evaluate_quality_constraints(const MetricList& report,
                                                           const QualityConstraints& constraints) {
  std::vector<QualityViolation> out;
  for (const auto& [name, c] : constraints.metrics) {
    QualityViolation v;
    v.metric = name;
    v.threshold = c.threshold;
    v.comparison_operator = c.comparison_operator;
    const MetricValue* m = find_metric(report, name);
    if (m == nullptr) {
      v.missing = true;
      out.push_back(v);
      continue;
    }
    if (!m->value) continue;
    v.value = m->value;
    v.standard_deviation = m->standard_deviation;
    const double slack = m->standard_deviation.value_or(0.0);
    const bool violated = c.comparison_operator == ComparisonOperator::GreaterThanThreshold
                              ? *m->value > c.threshold + slack
                              : *m->value < c.threshold - slack;
    if (violated) out.push_back(v);
  }
  return out;
}

std::string metrics_section_name(ProblemType problem) { return to_string(problem) + "_metrics"; }

std::string constraints_section_name(ProblemType problem) { return to_string(problem) + "_constraints"; }

nlohmann::ordered_json quality_report_document(const DatasetInfo& dataset, ProblemType problem,
                                               const MetricList& metrics,
                                               const std::optional<ConfusionMatrix>& confusion) {
  nlohmann::ordered_json doc;
  doc["version"] = 0.0;
  doc["dataset"] = {{"item_count", dataset.item_count},
                    {"start_time", format_utc(dataset.start_time)},
                    {"end_time", format_utc(dataset.end_time)},
                    {"evaluation_time", format_utc(dataset.evaluation_time, true)}};
  nlohmann::ordered_json section = nlohmann::ordered_json::object();
  if (confusion) {
    section["confusion_matrix"] = {{"0", {{"0", confusion->tn}, {"1", confusion->fp}}},
                                   {"1", {{"0", confusion->fn}, {"1", confusion->tp}}}};
  }
  for (const auto& [name, m] : metrics)
    section[name] = {{"value", number_or_nan(m.value)}, {"standard_deviation", number_or_nan(m.standard_deviation)}};
  doc[metrics_section_name(problem)] = std::move(section);
  return doc;
}

nlohmann::ordered_json constraints_document(const QualityConstraints& constraints) {
  nlohmann::ordered_json doc;
  doc["version"] = 0.0;
  nlohmann::ordered_json section = nlohmann::ordered_json::object();
  for (const auto& [name, c] : constraints.metrics)
    section[name] = {{"threshold", c.threshold}, {"comparison_operator", to_string(c.comparison_operator)}};
  doc[constraints_section_name(constraints.problem)] = std::move(section);
  return doc;
}

QualityConstraints constraints_from_document(const nlohmann::ordered_json& doc) {
  QualityConstraints out;
  const nlohmann::ordered_json* section = nullptr;
  for (auto problem : {ProblemType::regression, ProblemType::binary_classification}) {
    if (doc.contains(constraints_section_name(problem))) {
      out.problem = problem;
      section = &doc.at(constraints_section_name(problem));
    }
  }
  if (section == nullptr || !section->is_object())
    throw ParseError("constraints: missing 'regression_constraints' or 'binary_classification_constraints'");
  for (const auto& [name, c] : section->items()) {
    if (!c.contains("threshold") || !c.at("threshold").is_number())
      throw ParseError("constraints: field '" + name + ".threshold' missing or not a number");
    if (!c.contains("comparison_operator") || !c.at("comparison_operator").is_string())
      throw ParseError("constraints: field '" + name + ".comparison_operator' missing");
    out.metrics.emplace_back(name, QualityConstraint{c.at("threshold").get<double>(),
                                                     comparison_operator_from_string(c.at("comparison_operator"))});
  }
  return out;
}

MetricList metrics_from_report_document(const nlohmann::ordered_json& doc, ProblemType problem) {
  const auto key = metrics_section_name(problem);
  if (!doc.contains(key) || !doc.at(key).is_object()) throw ParseError("report: missing field '" + key + "'");
  MetricList out;
  for (const auto& [name, m] : doc.at(key).items()) {
    if (name == "confusion_matrix") continue;
    if (!m.contains("value")) throw ParseError("report: field '" + name + ".value' missing");
    MetricValue v;
    v.value = optional_number(m.at("value"), "report: field '" + name + ".value'");
    if (m.contains("standard_deviation"))
      v.standard_deviation = optional_number(m.at("standard_deviation"), "report: field '" + name + ".standard_deviation'");
    out.emplace_back(name, v);
  }
  return out;
}

}  // namespace modelmon
