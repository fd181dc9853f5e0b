#include "modelmon/drift.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include <boost/math/distributions/students_t.hpp>

#include "modelmon/errors.hpp"

namespace modelmon {

SampleStats sample_stats(const MomentsState& moments) {
  const auto summary = moments_finalize(moments);
  if (summary.count == 0) throw InsufficientDataError("sample_stats: empty moments state");
  return {summary.count, *summary.mean, *summary.std};
}

void DriftTestConfig::validate() const {
  if (!(epsilon >= 0.0) || !std::isfinite(epsilon)) throw ConfigError("drift: epsilon must be finite and >= 0");
  if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("drift: alpha must lie in (0, 1)");
}

DriftResult t_test_eps(const SampleStats& a, const SampleStats& b, const DriftTestConfig& cfg) {
  cfg.validate();
  if (a.n < 2 || b.n < 2) throw InsufficientDataError("t_test_eps: each sample needs at least 2 observations");

  auto corrected_var_of_mean = [](const SampleStats& s) {
    const double n = static_cast<double>(s.n);
    return s.std * s.std * n / (n - 1.0) / n;
  };
  const double va = corrected_var_of_mean(a);
  const double vb = corrected_var_of_mean(b);
  const double se = std::sqrt(va + vb);

  DriftResult r;
  r.distance = std::abs(a.mean - b.mean);
  const double excess = r.distance - cfg.epsilon;
  if (se == 0.0) {
    r.statistic = excess > 0.0 ? std::numeric_limits<double>::infinity()
                               : (excess < 0.0 ? -std::numeric_limits<double>::infinity() : 0.0);
    r.p_value = excess > 0.0 ? 0.0 : 1.0;
    r.drift_detected = excess > 0.0;
    return r;
  }
  r.statistic = excess / se;
  const double df = (va + vb) * (va + vb) /
                    (va * va / static_cast<double>(a.n - 1) + vb * vb / static_cast<double>(b.n - 1));
  const boost::math::students_t dist(df);
  r.p_value = boost::math::cdf(boost::math::complement(dist, r.statistic));
  r.drift_detected = *r.p_value < cfg.alpha;
  return r;
}

double kolmogorov_tail(double lambda) {
  if (!(lambda > 0.0)) return 1.0;
  constexpr double pi = std::numbers::pi;
  if (lambda < 1.18) {
    // Theta-function form, fast for small lambda:
    // 1 - Q = sqrt(2 pi) / lambda * sum_{k>=1} exp(-(2k-1)^2 pi^2 / (8 lambda^2)).
    const double scale = -pi * pi / (8.0 * lambda * lambda);
    double sum = 0.0;
    for (int k = 1; k <= 50; ++k) {
      const double odd = 2.0 * k - 1.0;
      const double term = std::exp(odd * odd * scale);
      sum += term;
      if (term < 1e-18 * sum) break;
    }
    return std::clamp(1.0 - std::sqrt(2.0 * pi) / lambda * sum, 0.0, 1.0);
  }
  double sum = 0.0;
  double sign = 1.0;
  for (int k = 1; k <= 100; ++k) {
    const double term = std::exp(-2.0 * k * k * lambda * lambda);
    sum += sign * term;
    if (term < 1e-18) break;
    sign = -sign;
  }
  return std::clamp(2.0 * sum, 0.0, 1.0);
}

DriftResult ks_test_eps(const KllState& a, const KllState& b, const DriftTestConfig& cfg) {
  cfg.validate();
  if (a.empty() || b.empty()) throw InsufficientDataError("ks_test_eps: empty sketch");
  const KllSortedView va(a);
  const KllSortedView vb(b);

  // Both empirical CDFs are step functions that only change at stored values,
  // so the supremum is attained on the union of cut points.
  double distance = 0.0;
  for (const auto* view : {&va, &vb})
    for (double x : view->cut_points()) distance = std::max(distance, std::abs(va.rank(x) - vb.rank(x)));

  const double na = static_cast<double>(a.n);
  const double nb = static_cast<double>(b.n);
  DriftResult r;
  r.distance = distance;
  r.statistic = std::max(0.0, distance - cfg.epsilon) * std::sqrt(na * nb / (na + nb));
  r.p_value = kolmogorov_tail(r.statistic);
  r.drift_detected = *r.p_value < cfg.alpha;
  return r;
}

DriftResult linf_categorical(const CategoricalCountState& p, const CategoricalCountState& q,
                             const DriftTestConfig& cfg) {
  cfg.validate();
  if (p.total == 0 || q.total == 0) throw InsufficientDataError("linf_categorical: empty category counts");
  const auto pn = categorical_normalized(p);
  const auto qn = categorical_normalized(q);
  auto prob = [](const std::map<std::string, double>& m, const std::string& label) {
    const auto it = m.find(label);
    return it == m.end() ? 0.0 : it->second;
  };
  double distance = 0.0;
  for (const auto* m : {&pn, &qn})
    for (const auto& [label, _] : *m) distance = std::max(distance, std::abs(prob(pn, label) - prob(qn, label)));

  DriftResult r;
  r.distance = distance;
  r.statistic = distance;
  r.drift_detected = distance > cfg.epsilon;
  return r;
}

std::vector<bool> anomaly_flags(std::span<const double> xs, const SampleStats& baseline, double k) {
  std::vector<bool> flags;
  flags.reserve(xs.size());
  const double band = k * baseline.std;
  for (double x : xs) flags.push_back(std::abs(x - baseline.mean) > band);
  return flags;
}

DriftResult embedding_drift(const Eigen::Ref<const Eigen::MatrixXd>& window,
                            const Eigen::Ref<const Eigen::MatrixXd>& baseline, double threshold) {
  if (baseline.rows() == 0) throw ValueError("embedding_drift: empty baseline");
  if (window.rows() == 0) throw InsufficientDataError("embedding_drift: empty window");
  if (window.cols() != baseline.cols()) throw ValueError("embedding_drift: dimension mismatch");

  auto unit_rows = [](const Eigen::Ref<const Eigen::MatrixXd>& m) {
    const Eigen::VectorXd norms = m.rowwise().norm();
    if ((norms.array() == 0.0).any()) throw ValueError("embedding_drift: zero-norm vector");
    return Eigen::MatrixXd(norms.cwiseInverse().asDiagonal() * m);
  };

  // mean_t mean_i <w_t, b_i> over unit rows = <mean_t w_t, mean_i b_i>.
  const double aggregate = unit_rows(window).colwise().mean().dot(unit_rows(baseline).colwise().mean());

  DriftResult r;
  r.statistic = aggregate;
  r.distance = aggregate;
  r.drift_detected = aggregate < threshold;
  return r;
}

}  // namespace modelmon
