#pragma once

// Mergeable streaming summaries: every state supports update (absorb one
// item), merge (combine two states) and finalize (answer a query). States are
// plain values; aggregation across workers or hours goes through merge only.

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include <json.hpp>

#include "modelmon/errors.hpp"
#include "modelmon/rng.hpp"

namespace modelmon {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Moments

struct MomentsState {
  std::uint64_t tot = 0;
  double sum = 0.0;
  double sumsq = 0.0;

  friend bool operator==(const MomentsState&, const MomentsState&) = default;
};

/// Finalized moments. mean/std are empty when count == 0.
struct MomentsSummary {
  std::uint64_t count = 0;
  std::optional<double> mean;
  std::optional<double> std;  // population (1/n) convention
};

/// Throws ValueError on non-finite x.
[[nodiscard]] MomentsState moments_update(MomentsState state, double x);
[[nodiscard]] MomentsState moments_merge(const MomentsState& a, const MomentsState& b) noexcept;
[[nodiscard]] MomentsSummary moments_finalize(const MomentsState& state) noexcept;

json to_document(const MomentsState& state);
MomentsState moments_from_document(const json& doc);

// ---------------------------------------------------------------------------
// Categorical counts

struct CategoricalCountState {
  std::map<std::string, std::uint64_t> counts;
  std::uint64_t total = 0;

  friend bool operator==(const CategoricalCountState&, const CategoricalCountState&) = default;
};

[[nodiscard]] CategoricalCountState categorical_update(CategoricalCountState state, const std::string& label);
[[nodiscard]] CategoricalCountState categorical_merge(const CategoricalCountState& a,
                                                      const CategoricalCountState& b);
/// Empirical probabilities; empty map when total == 0.
[[nodiscard]] std::map<std::string, double> categorical_normalized(const CategoricalCountState& state);

json to_document(const CategoricalCountState& state);
CategoricalCountState categorical_from_document(const json& doc);

// ---------------------------------------------------------------------------
// Reservoir sample
//
// Algorithm R. The replacement slot for the i-th item (1-based) is drawn from
// splitmix(seed, i), so the retained set is a function of (seed, stream).

template <typename T>
struct ReservoirState {
  std::size_t capacity = 100;
  std::vector<T> items;
  std::uint64_t seen = 0;
  std::uint64_t rng_seed = 0;

  friend bool operator==(const ReservoirState&, const ReservoirState&) = default;
};

template <typename T>
[[nodiscard]] ReservoirState<T> make_reservoir(std::size_t capacity, std::uint64_t seed) {
  if (capacity == 0) throw ConfigError("reservoir capacity must be positive");
  ReservoirState<T> r;
  r.capacity = capacity;
  r.rng_seed = seed;
  return r;
}

template <typename T>
void reservoir_update_in_place(ReservoirState<T>& state, T x) {
  ++state.seen;
  if (state.items.size() < state.capacity) {
    state.items.push_back(std::move(x));
    return;
  }
  const auto slot = bounded(mix_seed(state.rng_seed, {state.seen}), state.seen);
  if (slot < state.capacity) state.items[slot] = std::move(x);
}

template <typename T>
[[nodiscard]] ReservoirState<T> reservoir_update(ReservoirState<T> state, T x) {
  reservoir_update_in_place(state, std::move(x));
  return state;
}

/// Weighted subsampling: each output slot comes from a with probability
/// a.seen / (a.seen + b.seen), drawn without replacement from that side.
/// Capacities must match.
template <typename T>
[[nodiscard]] ReservoirState<T> reservoir_merge(const ReservoirState<T>& a, const ReservoirState<T>& b) {
  if (a.capacity != b.capacity) throw ValueError("reservoir merge: capacity mismatch");
  ReservoirState<T> out;
  out.capacity = a.capacity;
  out.seen = a.seen + b.seen;
  // Symmetric in (a, b): the generator is keyed on an order-free seed and the
  // sides are visited in a canonical order.
  const bool a_first = std::tie(a.seen, a.rng_seed, a.items) <= std::tie(b.seen, b.rng_seed, b.items);
  const auto& first = a_first ? a : b;
  const auto& second = a_first ? b : a;
  out.rng_seed = mix_seed(first.rng_seed, {second.rng_seed, first.seen, second.seen});
  if (a.seen + b.seen <= a.capacity) {
    out.items = first.items;
    out.items.insert(out.items.end(), second.items.begin(), second.items.end());
    return out;
  }

  std::mt19937_64 gen(out.rng_seed);
  std::vector<T> pool1 = first.items;
  std::vector<T> pool2 = second.items;
  std::shuffle(pool1.begin(), pool1.end(), gen);
  std::shuffle(pool2.begin(), pool2.end(), gen);
  std::bernoulli_distribution pick_first(static_cast<double>(first.seen) /
                                         static_cast<double>(first.seen + second.seen));
  std::size_t i1 = 0;
  std::size_t i2 = 0;
  while (out.items.size() < out.capacity && (i1 < pool1.size() || i2 < pool2.size())) {
    const bool take1 = i2 >= pool2.size() || (i1 < pool1.size() && pick_first(gen));
    out.items.push_back(take1 ? pool1[i1++] : pool2[i2++]);
  }
  return out;
}

template <typename T>
json to_document(const ReservoirState<T>& state) {
  return json{{"type", "reservoir"},
              {"capacity", state.capacity},
              {"seen", state.seen},
              {"seed", state.rng_seed},
              {"items", state.items}};
}

template <typename T>
ReservoirState<T> reservoir_from_document(const json& doc) {
  auto field = [&](const char* name) -> const json& {
    if (!doc.is_object() || !doc.contains(name)) throw ParseError(std::string("reservoir: missing field '") + name + "'");
    return doc.at(name);
  };
  if (field("type") != "reservoir") throw ParseError("reservoir: field 'type' must be \"reservoir\"");
  ReservoirState<T> r;
  try {
    r.capacity = field("capacity").template get<std::size_t>();
    r.seen = field("seen").template get<std::uint64_t>();
    r.rng_seed = field("seed").template get<std::uint64_t>();
    r.items = field("items").template get<std::vector<T>>();
  } catch (const json::exception& e) {
    throw ParseError(std::string("reservoir: ") + e.what());
  }
  if (r.capacity == 0) throw ParseError("reservoir: field 'capacity' must be positive");
  if (r.items.size() != std::min<std::uint64_t>(r.capacity, r.seen))
    throw ParseError("reservoir: field 'items' length inconsistent with 'seen' and 'capacity'");
  return r;
}

}  // namespace modelmon
