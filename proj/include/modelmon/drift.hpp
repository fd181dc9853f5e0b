#pragma once

// Drift tests that ask "how likely is collection A to be drawn from a
// distribution that is epsilon-close to distribution B?". Each test shifts its
// classical statistic by epsilon before computing a p-value, so a tiny but
// real difference on a huge sample is not reported as drift unless it exceeds
// epsilon.

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "modelmon/kll.hpp"
#include "modelmon/sketches.hpp"

namespace modelmon {

struct SampleStats {
  std::uint64_t n = 0;
  double mean = 0.0;
  double std = 0.0;  // population convention, as produced by moments_finalize
};

/// Throws InsufficientDataError for an empty state.
[[nodiscard]] SampleStats sample_stats(const MomentsState& moments);

struct DriftTestConfig {
  double epsilon = 0.1;
  double alpha = 0.05;

  /// Throws ConfigError unless epsilon >= 0 and 0 < alpha < 1.
  void validate() const;
};

struct DriftResult {
  double statistic = 0.0;
  std::optional<double> p_value;  // empty for threshold-only checks
  bool drift_detected = false;
  double distance = 0.0;
};

/// Welch t-test on |mean_a - mean_b| shifted by epsilon. Symmetric in (a, b).
[[nodiscard]] DriftResult t_test_eps(const SampleStats& a, const SampleStats& b, const DriftTestConfig& cfg);

/// Two-sample Kolmogorov-Smirnov on sketch CDFs with the distance shifted by
/// epsilon (CDF units). The distance inherits the sketches' rank error; it is
/// exact when both sketches are below their first compaction.
[[nodiscard]] DriftResult ks_test_eps(const KllState& a, const KllState& b, const DriftTestConfig& cfg);

/// Limiting Kolmogorov tail Q(lambda) = 2 sum_{k>=1} (-1)^(k-1) exp(-2 k^2 lambda^2),
/// with Q(lambda) = 1 for lambda <= 0.
[[nodiscard]] double kolmogorov_tail(double lambda);

/// L-infinity distance between empirical category distributions; labels
/// absent on one side count as probability 0. Threshold-only: drift iff
/// distance > epsilon.
[[nodiscard]] DriftResult linf_categorical(const CategoricalCountState& p, const CategoricalCountState& q,
                                           const DriftTestConfig& cfg);

inline constexpr double kDefaultAnomalySigmas = 3.0;

/// flag_i = |x_i - mean| > k * std.
[[nodiscard]] std::vector<bool> anomaly_flags(std::span<const double> xs, const SampleStats& baseline,
                                              double k = kDefaultAnomalySigmas);

/// Rows are embedding vectors. score(t) = mean_i cos(window_t, baseline_i);
/// the aggregate is the mean score over the window and drift is flagged when
/// it falls below threshold. distance = aggregate, statistic = aggregate.
[[nodiscard]] DriftResult embedding_drift(const Eigen::Ref<const Eigen::MatrixXd>& window,
                                          const Eigen::Ref<const Eigen::MatrixXd>& baseline, double threshold);

}  // namespace modelmon
