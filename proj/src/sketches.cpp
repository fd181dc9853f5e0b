#include "modelmon/sketches.hpp"

#include <cmath>

namespace modelmon {

namespace {

const json& require(const json& doc, const char* type, const char* name) {
  if (!doc.is_object()) throw ParseError(std::string(type) + ": document is not an object");
  if (!doc.contains(name)) throw ParseError(std::string(type) + ": missing field '" + name + "'");
  return doc.at(name);
}

template <typename T>
T read_field(const json& doc, const char* type, const char* name) {
  try {
    return require(doc, type, name).get<T>();
  } catch (const json::exception&) {
    throw ParseError(std::string(type) + ": field '" + name + "' has the wrong type");
  }
}

void check_type_tag(const json& doc, const char* type) {
  if (read_field<std::string>(doc, type, "type") != type)
    throw ParseError(std::string(type) + ": field 'type' must be \"" + type + "\"");
}

}  // namespace

MomentsState moments_update(MomentsState state, double x) {
  if (!std::isfinite(x)) throw ValueError("moments_update: non-finite value");
  state.tot += 1;
  state.sum += x;
  state.sumsq += x * x;
  return state;
}

MomentsState moments_merge(const MomentsState& a, const MomentsState& b) noexcept {
  return {a.tot + b.tot, a.sum + b.sum, a.sumsq + b.sumsq};
}

MomentsSummary moments_finalize(const MomentsState& state) noexcept {
  MomentsSummary out;
  out.count = state.tot;
  if (state.tot == 0) return out;
  const double n = static_cast<double>(state.tot);
  const double mean = state.sum / n;
  out.mean = mean;
  out.std = std::sqrt(std::max(0.0, state.sumsq / n - mean * mean));
  return out;
}

json to_document(const MomentsState& state) {
  return json{{"type", "moments"}, {"tot", state.tot}, {"sum", state.sum}, {"sumsq", state.sumsq}};
}

MomentsState moments_from_document(const json& doc) {
  check_type_tag(doc, "moments");
  MomentsState s;
  s.tot = read_field<std::uint64_t>(doc, "moments", "tot");
  s.sum = read_field<double>(doc, "moments", "sum");
  s.sumsq = read_field<double>(doc, "moments", "sumsq");
  if (s.tot == 0 && (s.sum != 0.0 || s.sumsq != 0.0))
    throw ParseError("moments: fields 'sum'/'sumsq' must be 0 when 'tot' is 0");
  return s;
}

CategoricalCountState categorical_update(CategoricalCountState state, const std::string& label) {
  state.counts[label] += 1;
  state.total += 1;
  return state;
}

CategoricalCountState categorical_merge(const CategoricalCountState& a, const CategoricalCountState& b) {
  CategoricalCountState out = a;
  for (const auto& [label, count] : b.counts) out.counts[label] += count;
  out.total += b.total;
  return out;
}

std::map<std::string, double> categorical_normalized(const CategoricalCountState& state) {
  std::map<std::string, double> p;
  if (state.total == 0) return p;
  for (const auto& [label, count] : state.counts)
    p.emplace(label, static_cast<double>(count) / static_cast<double>(state.total));
  return p;
}

json to_document(const CategoricalCountState& state) {
  return json{{"type", "categorical"}, {"counts", state.counts}, {"total", state.total}};
}

CategoricalCountState categorical_from_document(const json& doc) {
  check_type_tag(doc, "categorical");
  CategoricalCountState s;
  s.counts = read_field<std::map<std::string, std::uint64_t>>(doc, "categorical", "counts");
  s.total = read_field<std::uint64_t>(doc, "categorical", "total");
  std::uint64_t sum = 0;
  for (const auto& [_, c] : s.counts) sum += c;
  if (sum != s.total) throw ParseError("categorical: field 'total' does not equal the sum of 'counts'");
  return s;
}

}  // namespace modelmon
