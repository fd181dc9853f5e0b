#pragma once

// Feature-attribution drift: NDCG of the inference-time feature ranking
// against the training-time attribution scores.

#include <map>
#include <string>
#include <vector>

#include <json.hpp>

namespace modelmon {

inline constexpr double kDefaultNdcgThreshold = 0.9;

struct AttributionBaseline {
  std::map<std::string, double> scores;  // nonnegative training-time attribution per feature

  /// Features by descending score, ties by feature name.
  [[nodiscard]] std::vector<std::string> ranking() const;
};

struct AttributionObservation {
  std::vector<std::string> ranking;      // inference-time order, most important first
  std::map<std::string, double> scores;  // optional, kept for logging only
};

/// Ranking by descending score, ties by feature name.
[[nodiscard]] std::vector<std::string> rank_features(const std::map<std::string, double>& scores);

/// DCG(F') / iDCG(F) with discount log2(i + 1) at 1-based position i.
/// Throws ValueError on a feature-set mismatch, duplicate features or a
/// negative score (pass absolute values instead), and InsufficientDataError
/// when every baseline score is zero.
[[nodiscard]] double ndcg(const AttributionBaseline& baseline, const AttributionObservation& obs);

struct AttributionDriftResult {
  double ndcg = 1.0;
  bool alert = false;
};

/// alert = ndcg < threshold.
[[nodiscard]] AttributionDriftResult attribution_drift_check(const AttributionBaseline& baseline,
                                                             const AttributionObservation& obs,
                                                             double threshold = kDefaultNdcgThreshold);

/// {"scores":{feature:score}}
[[nodiscard]] AttributionBaseline attribution_baseline_from_document(const nlohmann::ordered_json& doc);
[[nodiscard]] nlohmann::ordered_json to_document(const AttributionBaseline& baseline);
/// {"ranking":[feature,...]} or {"scores":{...}}, from which the ranking is derived.
[[nodiscard]] AttributionObservation attribution_observation_from_document(const nlohmann::ordered_json& doc);

}  // namespace modelmon
