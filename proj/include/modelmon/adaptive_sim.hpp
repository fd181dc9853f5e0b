#pragma once

// Synthetic retraining experiment: a linear generative model y = a x + b that
// drifts every 100 examples, and two retraining policies (fixed interval vs.
// trailing-RMSE threshold) compared on cost (retrains) against stream RMSE.

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace modelmon {

inline constexpr std::size_t kDriftPeriod = 100;
inline constexpr std::size_t kTrailingWindow = 100;
inline constexpr std::size_t kDefaultHorizon = 10'000;

struct GenerativeModel {
  double a = 0.0;
  double b = 0.0;
  friend bool operator==(const GenerativeModel&, const GenerativeModel&) = default;
};

enum class DriftMode { random, mean_only };

/// a and b each gain an independent N(1, 1) draw; mean_only adds exactly 1.
[[nodiscard]] GenerativeModel drift_step(GenerativeModel model, std::mt19937_64& rng,
                                         DriftMode mode = DriftMode::random);

enum class Technique { adaptive, nonadaptive };

[[nodiscard]] std::string to_string(Technique t);

struct Policy {
  Technique kind = Technique::nonadaptive;
  double threshold = 1.0;    // adaptive: trailing-RMSE trigger
  std::size_t interval = 100;  // nonadaptive: examples between retrains

  /// Throws ConfigError unless threshold > 0 (adaptive) or interval >= 1.
  void validate() const;
};

struct RoundResult {
  Technique technique = Technique::nonadaptive;
  std::uint64_t cost = 0;
  double rmse = 0.0;
  double knob = 0.0;
};

struct SimulationOptions {
  std::size_t horizon = kDefaultHorizon;
  GenerativeModel initial{};
  DriftMode drift = DriftMode::random;
};

/// One stream. After each example the policy may retrain (setting the
/// deployed model to the generative one and clearing the trailing window),
/// then the generative model drifts when the example count is a multiple of
/// 100. The adaptive check runs only on a full trailing window.
[[nodiscard]] RoundResult simulate(const Policy& policy, const SimulationOptions& options, std::uint64_t seed);

struct KnobRanges {
  std::vector<std::size_t> intervals{50, 100, 200, 400, 800, 1600, 3200};
  double threshold_low = 0.5;   // log-uniform
  double threshold_high = 20.0;
};

struct ExperimentOptions {
  std::size_t rounds = 400;
  std::size_t horizon = kDefaultHorizon;
  KnobRanges knobs{};
  std::uint64_t master_seed = 0;
};

/// Rounds draw the technique and knob uniformly and use an independent
/// stream; throws ConfigError on rounds == 0.
[[nodiscard]] std::vector<RoundResult> experiment(const ExperimentOptions& options);

struct SummaryRow {
  Technique technique = Technique::nonadaptive;
  std::uint64_t cost = 0;
  double mean_rmse = 0.0;
  std::size_t count = 0;
};

/// Mean RMSE per (technique, cost), ordered by technique then cost.
[[nodiscard]] std::vector<SummaryRow> summarize(const std::vector<RoundResult>& results);

struct CostComparison {
  std::uint64_t cost = 0;  // nonadaptive cost level
  double nonadaptive_mean = 0.0;
  std::size_t nonadaptive_count = 0;
  double adaptive_mean = 0.0;
  std::size_t adaptive_count = 0;
  [[nodiscard]] bool adaptive_better() const noexcept { return adaptive_mean < nonadaptive_mean; }
};

/// Cost levels where both techniques have at least `min_points` rounds at
/// exactly that cost.
[[nodiscard]] std::vector<CostComparison> compare_at_equal_cost(const std::vector<RoundResult>& results,
                                                                std::size_t min_points = 10);

/// For each nonadaptive cost level c with at least `min_nonadaptive` rounds,
/// the adaptive rounds with cost in [c / band, c * band]; levels with fewer
/// than `min_adaptive` such rounds are left out.
[[nodiscard]] std::vector<CostComparison> compare_in_cost_band(const std::vector<RoundResult>& results,
                                                               double band = 1.25, std::size_t min_nonadaptive = 10,
                                                               std::size_t min_adaptive = 5);

[[nodiscard]] std::string triplets_csv(const std::vector<RoundResult>& results);
[[nodiscard]] std::string summary_csv(const std::vector<SummaryRow>& rows);

}  // namespace modelmon
