#include "modelmon/attribution.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "modelmon/errors.hpp"

namespace modelmon {

namespace {

std::map<std::string, double> scores_from(const nlohmann::ordered_json& doc, const char* what) {
  if (!doc.is_object() || !doc.contains("scores") || !doc.at("scores").is_object())
    throw ParseError(std::string(what) + ": missing object field 'scores'");
  std::map<std::string, double> out;
  for (const auto& [name, v] : doc.at("scores").items()) {
    if (!v.is_number()) throw ParseError(std::string(what) + ": field 'scores." + name + "' is not a number");
    out[name] = v.get<double>();
  }
  return out;
}

}  // namespace

std::vector<std::string> rank_features(const std::map<std::string, double>& scores) {
  std::vector<std::string> out;
  out.reserve(scores.size());
  for (const auto& [name, _] : scores) out.push_back(name);
  // std::map iterates by name, so a stable sort on score leaves ties by name.
  std::stable_sort(out.begin(), out.end(),
                   [&](const std::string& a, const std::string& b) { return scores.at(a) > scores.at(b); });
  return out;
}

std::vector<std::string> AttributionBaseline::ranking() const { return rank_features(scores); }

double ndcg(const AttributionBaseline& baseline, const AttributionObservation& obs) {
  for (const auto& [name, score] : baseline.scores)
    if (!(score >= 0.0) || !std::isfinite(score))
      throw ValueError("ndcg: attribution score for '" + name + "' is negative or not finite; pass absolute values");
  const std::set<std::string> observed(obs.ranking.begin(), obs.ranking.end());
  if (observed.size() != obs.ranking.size()) throw ValueError("ndcg: observed ranking repeats a feature");
  if (observed.size() != baseline.scores.size() ||
      !std::all_of(observed.begin(), observed.end(), [&](const auto& f) { return baseline.scores.contains(f); }))
    throw ValueError("ndcg: observed ranking and baseline cover different feature sets");

  auto dcg = [&](const std::vector<std::string>& order) {
    double sum = 0.0;
    for (std::size_t i = 0; i < order.size(); ++i)
      sum += baseline.scores.at(order[i]) / std::log2(static_cast<double>(i) + 2.0);
    return sum;
  };
  const double ideal = dcg(baseline.ranking());
  if (ideal == 0.0) throw InsufficientDataError("ndcg: all baseline attribution scores are zero");
  return dcg(obs.ranking) / ideal;
}

AttributionDriftResult attribution_drift_check(const AttributionBaseline& baseline, const AttributionObservation& obs,
                                               double threshold) {
  const double value = ndcg(baseline, obs);
  return {value, value < threshold};
}

AttributionBaseline attribution_baseline_from_document(const nlohmann::ordered_json& doc) {
  return {scores_from(doc, "attribution baseline")};
}

nlohmann::ordered_json to_document(const AttributionBaseline& baseline) {
  nlohmann::ordered_json scores = nlohmann::ordered_json::object();
  for (const auto& name : baseline.ranking()) scores[name] = baseline.scores.at(name);
  return {{"scores", scores}};
}

AttributionObservation attribution_observation_from_document(const nlohmann::ordered_json& doc) {
  AttributionObservation obs;
  if (doc.is_object() && doc.contains("ranking")) {
    const auto& r = doc.at("ranking");
    if (!r.is_array()) throw ParseError("attribution observation: field 'ranking' is not an array");
    for (const auto& f : r) {
      if (!f.is_string()) throw ParseError("attribution observation: field 'ranking' holds a non-string");
      obs.ranking.push_back(f.get<std::string>());
    }
    if (doc.contains("scores")) obs.scores = scores_from(doc, "attribution observation");
    return obs;
  }
  obs.scores = scores_from(doc, "attribution observation");
  obs.ranking = rank_features(obs.scores);
  return obs;
}

}  // namespace modelmon
