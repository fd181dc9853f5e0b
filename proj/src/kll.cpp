#include "modelmon/kll.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "modelmon/errors.hpp"
#include "modelmon/rng.hpp"

namespace modelmon {

namespace {

constexpr double kCapacityDecay = 2.0 / 3.0;
constexpr std::size_t kMinLevelCapacity = 2;

void compact_level(KllState& s, std::size_t h) {
  if (h + 1 == s.levels.size()) s.levels.emplace_back();
  if (s.compactions.size() < s.levels.size()) s.compactions.resize(s.levels.size(), 0);
  auto& level = s.levels[h];
  std::sort(level.begin(), level.end());

  // An odd leftover keeps its weight at this level.
  const std::size_t leftover = level.size() % 2;
  const bool take_odd = ((mix_seed(s.rng_seed, {h}) ^ s.compactions[h]) & 1U) != 0;
  ++s.compactions[h];
  auto& above = s.levels[h + 1];
  for (std::size_t i = leftover + (take_odd ? 1 : 0); i < level.size(); i += 2) above.push_back(level[i]);
  level.resize(leftover);
}

void compress(KllState& s) {
  while (kll_num_retained(s) > kll_total_capacity(s)) {
    const std::size_t num_levels = s.levels.size();
    std::size_t h = 0;
    while (h + 1 < num_levels && s.levels[h].size() < kll_level_capacity(s.k, h, num_levels)) ++h;
    compact_level(s, h);
  }
}

void require_nonempty(const KllState& s, const char* op) {
  if (s.empty()) throw InsufficientDataError(std::string(op) + ": empty sketch");
}

}  // namespace

KllState make_kll(std::uint32_t k, std::uint64_t seed) {
  if (k < kMinLevelCapacity) throw ConfigError("kll: k must be at least 2");
  KllState s;
  s.k = k;
  s.rng_seed = seed;
  return s;
}

std::size_t kll_level_capacity(std::uint32_t k, std::size_t level, std::size_t num_levels) {
  const double depth = static_cast<double>(num_levels - 1 - level);
  const auto cap = static_cast<std::size_t>(std::ceil(k * std::pow(kCapacityDecay, depth)));
  return std::max(kMinLevelCapacity, cap);
}

std::size_t kll_total_capacity(const KllState& s) {
  std::size_t total = 0;
  for (std::size_t h = 0; h < s.levels.size(); ++h) total += kll_level_capacity(s.k, h, s.levels.size());
  return total;
}

std::size_t kll_num_retained(const KllState& s) {
  std::size_t total = 0;
  for (const auto& level : s.levels) total += level.size();
  return total;
}

double kll_rank_error_bound(std::uint32_t k) noexcept { return 2.0 / static_cast<double>(k); }

void kll_update_in_place(KllState& s, double x) {
  if (!std::isfinite(x)) throw ValueError("kll_update: non-finite value");
  if (s.levels.empty()) s.levels.emplace_back();
  if (s.n == 0) {
    s.min_value = x;
    s.max_value = x;
  } else {
    s.min_value = std::min(s.min_value, x);
    s.max_value = std::max(s.max_value, x);
  }
  s.levels[0].push_back(x);
  ++s.n;
  compress(s);
}

KllState kll_update(KllState sketch, double x) {
  kll_update_in_place(sketch, x);
  return sketch;
}

KllState kll_merge(const KllState& a, const KllState& b) {
  if (a.k != b.k) throw ValueError("kll_merge: k mismatch (" + std::to_string(a.k) + " vs " + std::to_string(b.k) + ")");
  if (a.empty() != b.empty()) return a.empty() ? b : a;

  KllState out;
  out.k = a.k;
  out.rng_seed = mix_seed(std::min(a.rng_seed, b.rng_seed), {std::max(a.rng_seed, b.rng_seed)});
  if (a.empty()) return out;
  out.n = a.n + b.n;
  out.min_value = std::min(a.min_value, b.min_value);
  out.max_value = std::max(a.max_value, b.max_value);
  out.levels.resize(std::max(a.levels.size(), b.levels.size()));
  out.compactions.assign(out.levels.size(), 0);
  for (const KllState* src : {&a, &b}) {
    for (std::size_t h = 0; h < src->levels.size(); ++h)
      out.levels[h].insert(out.levels[h].end(), src->levels[h].begin(), src->levels[h].end());
    for (std::size_t h = 0; h < src->compactions.size() && h < out.compactions.size(); ++h)
      out.compactions[h] += src->compactions[h];
  }
  // Levels are sorted before compaction, so operand order does not matter.
  for (auto& level : out.levels) std::sort(level.begin(), level.end());
  compress(out);
  return out;
}

KllSortedView::KllSortedView(const KllState& s) : n_(s.n), min_(s.min_value), max_(s.max_value) {
  std::vector<std::pair<double, std::uint64_t>> weighted;
  for (std::size_t h = 0; h < s.levels.size(); ++h)
    for (double v : s.levels[h]) weighted.emplace_back(v, std::uint64_t{1} << h);
  std::sort(weighted.begin(), weighted.end());
  values_.reserve(weighted.size());
  cumulative_.reserve(weighted.size());
  std::uint64_t acc = 0;
  for (const auto& [v, w] : weighted) {
    acc += w;
    if (!values_.empty() && values_.back() == v) {
      cumulative_.back() = acc;
    } else {
      values_.push_back(v);
      cumulative_.push_back(acc);
    }
  }
}

std::uint64_t KllSortedView::weight_at_or_below(double x) const {
  const auto it = std::upper_bound(values_.begin(), values_.end(), x);
  if (it == values_.begin()) return 0;
  return cumulative_[static_cast<std::size_t>(it - values_.begin()) - 1];
}

double KllSortedView::rank(double x) const {
  if (n_ == 0) throw InsufficientDataError("kll_rank: empty sketch");
  return static_cast<double>(weight_at_or_below(x)) / static_cast<double>(n_);
}

double KllSortedView::quantile(double phi) const {
  if (n_ == 0) throw InsufficientDataError("kll_quantile: empty sketch");
  if (!(phi >= 0.0 && phi <= 1.0)) throw ValueError("kll_quantile: phi must lie in [0, 1]");
  if (phi == 0.0) return min_;
  if (phi == 1.0) return max_;
  const double target = phi * static_cast<double>(n_);
  const auto it = std::lower_bound(cumulative_.begin(), cumulative_.end(), target,
                                   [](std::uint64_t c, double t) { return static_cast<double>(c) < t; });
  if (it == cumulative_.end()) return max_;
  return values_[static_cast<std::size_t>(it - cumulative_.begin())];
}

std::vector<double> KllSortedView::cut_points() const { return values_; }

double kll_rank(const KllState& sketch, double x) {
  require_nonempty(sketch, "kll_rank");
  return KllSortedView(sketch).rank(x);
}

double kll_quantile(const KllState& sketch, double phi) {
  require_nonempty(sketch, "kll_quantile");
  return KllSortedView(sketch).quantile(phi);
}

Histogram kll_histogram(const KllState& sketch, std::size_t num_bins) {
  require_nonempty(sketch, "kll_histogram");
  if (num_bins == 0) throw ValueError("kll_histogram: num_bins must be at least 1");
  Histogram hist;
  hist.total = static_cast<double>(sketch.n);
  if (sketch.min_value == sketch.max_value) {
    hist.bin_edges = {sketch.min_value, sketch.max_value};
    hist.bin_masses = {hist.total};
    return hist;
  }
  const KllSortedView view(sketch);
  const double lo = sketch.min_value;
  const double width = (sketch.max_value - lo) / static_cast<double>(num_bins);
  hist.bin_edges.reserve(num_bins + 1);
  for (std::size_t i = 0; i < num_bins; ++i) hist.bin_edges.push_back(lo + width * static_cast<double>(i));
  hist.bin_edges.push_back(sketch.max_value);

  std::uint64_t previous = 0;
  for (std::size_t i = 1; i <= num_bins; ++i) {
    const std::uint64_t upto = i == num_bins ? sketch.n : view.weight_at_or_below(hist.bin_edges[i]);
    hist.bin_masses.push_back(static_cast<double>(upto - previous));
    previous = upto;
  }
  return hist;
}

nlohmann::json kll_serialize(const KllState& s) {
  nlohmann::json doc{{"type", "kll"},  {"k", s.k},          {"n", s.n},
                     {"seed", s.rng_seed}, {"levels", s.levels}, {"compactions", s.compactions}};
  if (s.empty()) {
    doc["min"] = nullptr;
    doc["max"] = nullptr;
  } else {
    doc["min"] = s.min_value;
    doc["max"] = s.max_value;
  }
  return doc;
}

KllState kll_deserialize(const nlohmann::json& doc) {
  if (!doc.is_object()) throw ParseError("kll: document is not an object");
  auto field = [&](const char* name) -> const nlohmann::json& {
    if (!doc.contains(name)) throw ParseError(std::string("kll: missing field '") + name + "'");
    return doc.at(name);
  };
  auto typed = [&](const char* name, auto proto) {
    try {
      return field(name).template get<decltype(proto)>();
    } catch (const nlohmann::json::exception&) {
      throw ParseError(std::string("kll: field '") + name + "' has the wrong type");
    }
  };

  if (typed("type", std::string{}) != "kll") throw ParseError("kll: field 'type' must be \"kll\"");
  KllState s;
  s.k = typed("k", std::uint32_t{});
  if (s.k < kMinLevelCapacity) throw ParseError("kll: field 'k' must be at least 2");
  s.n = typed("n", std::uint64_t{});
  s.rng_seed = typed("seed", std::uint64_t{});
  s.levels = typed("levels", std::vector<std::vector<double>>{});
  if (s.levels.size() >= 64) throw ParseError("kll: field 'levels' has too many levels");

  if (doc.contains("compactions")) s.compactions = typed("compactions", std::vector<std::uint64_t>{});
  if (s.compactions.size() > s.levels.size())
    throw ParseError("kll: field 'compactions' is longer than 'levels'");

  std::uint64_t weight = 0;
  for (std::size_t h = 0; h < s.levels.size(); ++h) weight += static_cast<std::uint64_t>(s.levels[h].size()) << h;
  if (weight != s.n) throw ParseError("kll: field 'n' is inconsistent with the level weights");
  if (kll_num_retained(s) > kll_total_capacity(s)) throw ParseError("kll: field 'levels' exceeds the total capacity");

  if (s.n == 0) {
    if (!field("min").is_null() || !field("max").is_null())
      throw ParseError("kll: fields 'min'/'max' must be null for an empty sketch");
    return s;
  }
  s.min_value = typed("min", double{});
  s.max_value = typed("max", double{});
  for (const auto& level : s.levels)
    for (double v : level)
      if (!(v >= s.min_value && v <= s.max_value))
        throw ParseError("kll: field 'levels' holds a value outside ['min', 'max']");
  return s;
}

}  // namespace modelmon
