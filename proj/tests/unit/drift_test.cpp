#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include <gtest/gtest.h>

#include "modelmon/drift.hpp"
#include "modelmon/errors.hpp"
#include "test_support.hpp"

namespace modelmon {
namespace {

using testing::for_each_case;

SampleStats stats_of(const std::vector<double>& xs) {
  MomentsState m;
  for (double x : xs) m = moments_update(m, x);
  return sample_stats(m);
}

KllState kll_of(const std::vector<double>& xs, std::uint32_t k = 200) {
  auto s = make_kll(k, 1);
  for (double x : xs) kll_update_in_place(s, x);
  return s;
}

// Welch statistic, df and p from unbiased sample variances, computed directly.
struct WelchOracle {
  double t, df, p;
};

WelchOracle welch(const std::vector<double>& a, const std::vector<double>& b, double eps) {
  auto mean_var = [](const std::vector<double>& xs) {
    double m = 0.0;
    for (double x : xs) m += x;
    m /= xs.size();
    double ss = 0.0;
    for (double x : xs) ss += (x - m) * (x - m);
    return std::pair{m, ss / (xs.size() - 1.0)};
  };
  const auto [ma, sa] = mean_var(a);
  const auto [mb, sb] = mean_var(b);
  const double va = sa / a.size();
  const double vb = sb / b.size();
  const double t = (std::abs(ma - mb) - eps) / std::sqrt(va + vb);
  const double df = (va + vb) * (va + vb) / (va * va / (a.size() - 1.0) + vb * vb / (b.size() - 1.0));
  return {t, df, testing::student_t_upper_tail(t, df)};
}

// Exact two-sample KS distance by merging the sorted samples.
double ks_distance(std::vector<double> a, std::vector<double> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  std::set<double> cuts(a.begin(), a.end());
  cuts.insert(b.begin(), b.end());
  double d = 0.0;
  for (double x : cuts) d = std::max(d, std::abs(testing::exact_rank(a, x) - testing::exact_rank(b, x)));
  return d;
}

std::vector<double> normal_sample(std::mt19937_64& gen, std::size_t n, double mu, double sigma) {
  std::normal_distribution<double> d(mu, sigma);
  std::vector<double> out(n);
  for (auto& x : out) x = d(gen);
  return out;
}

TEST(DriftConfig, Validation) {
  EXPECT_THROW((DriftTestConfig{-0.1, 0.05}.validate()), ConfigError);
  EXPECT_THROW((DriftTestConfig{0.1, 0.0}.validate()), ConfigError);
  EXPECT_THROW((DriftTestConfig{0.1, 1.0}.validate()), ConfigError);
  EXPECT_NO_THROW((DriftTestConfig{0.0, 0.5}.validate()));
}

TEST(TTest, MatchesQuadratureOracle) {
  for_each_case(200, 20, [](std::mt19937_64& gen, std::size_t) {
    const auto a = normal_sample(gen, 2 + gen() % 200, 0.0, 1.0 + gen() % 3);
    const auto b = normal_sample(gen, 2 + gen() % 200, (gen() % 100) / 100.0, 1.0);
    const double eps = (gen() % 50) / 100.0;
    const auto r = t_test_eps(stats_of(a), stats_of(b), {eps, 0.05});
    const auto oracle = welch(a, b, eps);
    EXPECT_NEAR(r.statistic, oracle.t, 1e-8 * std::max(1.0, std::abs(oracle.t)));
    EXPECT_NEAR(*r.p_value, oracle.p, 1e-7);
    EXPECT_EQ(r.drift_detected, *r.p_value < 0.05);
  });
}

TEST(TTest, SymmetricAndMonotoneInEpsilon) {
  for_each_case(200, 21, [](std::mt19937_64& gen, std::size_t) {
    const auto a = stats_of(normal_sample(gen, 30, 0.0, 1.0));
    const auto b = stats_of(normal_sample(gen, 40, 0.5, 2.0));
    double last_p = -1.0;
    for (double eps = 0.0; eps <= 1.0; eps += 0.1) {
      const auto ab = t_test_eps(a, b, {eps, 0.05});
      const auto ba = t_test_eps(b, a, {eps, 0.05});
      EXPECT_DOUBLE_EQ(*ab.p_value, *ba.p_value);
      EXPECT_GE(*ab.p_value, last_p);
      last_p = *ab.p_value;
    }
  });
}

TEST(TTest, InsufficientAndDegenerateSamples) {
  EXPECT_THROW((void)t_test_eps({1, 0.0, 0.0}, {5, 0.0, 1.0}, {}), InsufficientDataError);
  const auto same = t_test_eps({10, 1.0, 0.0}, {10, 1.0, 0.0}, {0.0, 0.05});
  EXPECT_FALSE(same.drift_detected);
  const auto apart = t_test_eps({10, 1.0, 0.0}, {10, 2.0, 0.0}, {0.5, 0.05});
  EXPECT_TRUE(apart.drift_detected);
  EXPECT_EQ(*apart.p_value, 0.0);
}

TEST(TTest, EpsilonAbsorbsLargeSampleNoise) {
  std::mt19937_64 gen(4);
  const auto a = stats_of(normal_sample(gen, 100000, 0.0, 1.0));
  const auto b = stats_of(normal_sample(gen, 100000, 0.02, 1.0));
  EXPECT_TRUE(t_test_eps(a, b, {0.0, 0.05}).drift_detected);
  EXPECT_FALSE(t_test_eps(a, b, {0.1, 0.05}).drift_detected);
}

TEST(KolmogorovTail, MatchesSeriesOracle) {
  for (double lambda = 0.3; lambda <= 3.0; lambda += 0.01)
    EXPECT_NEAR(kolmogorov_tail(lambda), testing::kolmogorov_series(lambda), 1e-12) << "lambda " << lambda;
  EXPECT_EQ(kolmogorov_tail(0.0), 1.0);
  EXPECT_EQ(kolmogorov_tail(-1.0), 1.0);
  EXPECT_NEAR(kolmogorov_tail(0.05), 1.0, 1e-12);
  EXPECT_NEAR(kolmogorov_tail(1.3580986393225505), 0.05, 1e-9);
}

TEST(KsTest, ExactBelowCompactionAndMatchesOracle) {
  for_each_case(200, 22, [](std::mt19937_64& gen, std::size_t) {
    const auto a = normal_sample(gen, 1 + gen() % 150, 0.0, 1.0);
    const auto b = normal_sample(gen, 1 + gen() % 150, (gen() % 10) / 10.0, 1.0);
    const double eps = (gen() % 20) / 100.0;
    const auto r = ks_test_eps(kll_of(a), kll_of(b), {eps, 0.05});
    const double d = ks_distance(a, b);
    EXPECT_DOUBLE_EQ(r.distance, d);
    const double na = a.size();
    const double nb = b.size();
    const double lambda = std::max(0.0, d - eps) * std::sqrt(na * nb / (na + nb));
    EXPECT_NEAR(r.statistic, lambda, 1e-12);
    EXPECT_NEAR(*r.p_value, lambda > 0 ? testing::kolmogorov_series(lambda) : 1.0, 1e-9);
  });
}

TEST(KsTest, SketchedDistanceWithinTwiceRankError) {
  for_each_case(10, 23, [](std::mt19937_64& gen, std::size_t) {
    const auto a = normal_sample(gen, 20000 + gen() % 20000, 0.0, 1.0);
    const auto b = normal_sample(gen, 20000 + gen() % 20000, 0.3, 1.0);
    const auto r = ks_test_eps(kll_of(a), kll_of(b), {0.0, 0.05});
    EXPECT_NEAR(r.distance, ks_distance(a, b), 2.0 * kll_rank_error_bound(200));
  });
}

TEST(KsTest, SymmetricAndMonotoneInEpsilon) {
  for_each_case(50, 24, [](std::mt19937_64& gen, std::size_t) {
    const auto a = kll_of(normal_sample(gen, 300, 0.0, 1.0));
    const auto b = kll_of(normal_sample(gen, 500, 0.2, 1.0));
    double last = -1.0;
    for (double eps = 0.0; eps <= 0.5; eps += 0.05) {
      const auto ab = ks_test_eps(a, b, {eps, 0.05});
      EXPECT_DOUBLE_EQ(*ab.p_value, *ks_test_eps(b, a, {eps, 0.05}).p_value);
      EXPECT_GE(*ab.p_value, last);
      last = *ab.p_value;
    }
  });
}

TEST(KsTest, EmptySketchThrows) {
  EXPECT_THROW((void)ks_test_eps(make_kll(), kll_of({1.0}), {}), InsufficientDataError);
}

TEST(Linf, HandExampleAndMissingLabels) {
  CategoricalCountState p;
  CategoricalCountState q;
  for (const char* l : {"a", "a", "a", "b"}) p = categorical_update(p, l);
  for (const char* l : {"a", "c"}) q = categorical_update(q, l);
  const auto r = linf_categorical(p, q, {0.3, 0.05});
  EXPECT_DOUBLE_EQ(r.distance, 0.5);
  EXPECT_TRUE(r.drift_detected);
  EXPECT_FALSE(r.p_value.has_value());
  EXPECT_FALSE(linf_categorical(p, q, {0.5, 0.05}).drift_detected);
  EXPECT_THROW((void)linf_categorical(p, {}, {}), InsufficientDataError);
}

TEST(LinfProperty, SymmetricBoundedAndZeroOnSelf) {
  for_each_case(500, 25, [](std::mt19937_64& gen, std::size_t) {
    auto draw = [&] {
      CategoricalCountState s;
      const int n = 1 + static_cast<int>(gen() % 50);
      for (int i = 0; i < n; ++i) s = categorical_update(s, std::string(1, static_cast<char>('a' + gen() % 6)));
      return s;
    };
    const auto p = draw();
    const auto q = draw();
    const auto pq = linf_categorical(p, q, {});
    EXPECT_DOUBLE_EQ(pq.distance, linf_categorical(q, p, {}).distance);
    EXPECT_GE(pq.distance, 0.0);
    EXPECT_LE(pq.distance, 1.0);
    EXPECT_EQ(linf_categorical(p, p, {}).distance, 0.0);
  });
}

TEST(Anomaly, FlagsOutsideBand) {
  const std::vector<double> xs{0.0, 2.9, 3.1, -3.1, -2.0};
  const auto flags = anomaly_flags(xs, {100, 0.0, 1.0});
  EXPECT_EQ(flags, (std::vector<bool>{false, false, true, true, false}));
  const auto tight = anomaly_flags(xs, {100, 0.0, 1.0}, 1.0);
  EXPECT_EQ(tight, (std::vector<bool>{false, true, true, true, true}));
}

TEST(Embedding, MatchesPairwiseCosineOracle) {
  for_each_case(100, 26, [](std::mt19937_64& gen, std::size_t) {
    std::normal_distribution<double> d;
    const Eigen::Index dim = 1 + static_cast<Eigen::Index>(gen() % 8);
    Eigen::MatrixXd w(1 + gen() % 10, dim);
    Eigen::MatrixXd b(1 + gen() % 10, dim);
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = d(gen);
    for (Eigen::Index i = 0; i < b.size(); ++i) b.data()[i] = d(gen);
    double sum = 0.0;
    for (Eigen::Index t = 0; t < w.rows(); ++t)
      for (Eigen::Index i = 0; i < b.rows(); ++i)
        sum += w.row(t).dot(b.row(i)) / (w.row(t).norm() * b.row(i).norm());
    const double oracle = sum / static_cast<double>(w.rows() * b.rows());
    const auto r = embedding_drift(w, b, 0.2);
    EXPECT_NEAR(r.statistic, oracle, 1e-12);
    EXPECT_EQ(r.drift_detected, r.statistic < 0.2);
  });
}

TEST(Embedding, Errors) {
  Eigen::MatrixXd a = Eigen::MatrixXd::Ones(2, 3);
  Eigen::MatrixXd b = Eigen::MatrixXd::Ones(2, 4);
  EXPECT_THROW((void)embedding_drift(a, b, 0.5), ValueError);
  EXPECT_THROW((void)embedding_drift(Eigen::MatrixXd(0, 3), a, 0.5), InsufficientDataError);
  EXPECT_THROW((void)embedding_drift(a, Eigen::MatrixXd(0, 3), 0.5), ValueError);
  Eigen::MatrixXd z = Eigen::MatrixXd::Zero(1, 3);
  EXPECT_THROW((void)embedding_drift(z, a, 0.5), ValueError);
  EXPECT_NEAR(embedding_drift(a, a, 0.5).statistic, 1.0, 1e-12);
}

TEST(TTest, IdenticalStatsNeverDrift) {
  const SampleStats s{50, 1.5, 2.0};
  for (double eps : {0.0, 0.1, 1.0}) {
    const auto r = t_test_eps(s, s, {eps, 0.05});
    EXPECT_EQ(r.distance, 0.0);
    EXPECT_LE(r.statistic, 0.0);
    EXPECT_GE(*r.p_value, 0.5);
    EXPECT_FALSE(r.drift_detected);
  }
}

TEST(TTest, ThreeStandardErrorsAtZeroEpsilon) {
  // Equal n and std: SE = sqrt(2 s^2 / (n - 1)) with population std s.
  const std::uint64_t n = 30;
  const double s = 1.0;
  const double se = std::sqrt(2.0 * s * s / (n - 1.0));
  const auto r = t_test_eps({n, 0.0, s}, {n, 3.0 * se, s}, {0.0, 0.05});
  EXPECT_NEAR(r.statistic, 3.0, 1e-12);
  EXPECT_NEAR(*r.p_value, testing::student_t_upper_tail(3.0, 2.0 * (n - 1.0)), 1e-9);
  EXPECT_TRUE(r.drift_detected);
}

TEST(KsTest, ShiftedIntegerRangesExample) {
  std::vector<double> a;
  std::vector<double> b;
  for (int i = 1; i <= 100; ++i) a.push_back(i);
  for (int i = 51; i <= 150; ++i) b.push_back(i);
  const auto r = ks_test_eps(kll_of(a), kll_of(b), {0.1, 0.05});
  EXPECT_DOUBLE_EQ(r.distance, 0.5);
  EXPECT_NEAR(r.statistic, 0.4 * std::sqrt(50.0), 1e-12);
  EXPECT_LT(*r.p_value, 1e-6);
  EXPECT_TRUE(r.drift_detected);
  const auto unreachable = ks_test_eps(kll_of(a), kll_of(b), {1.0, 0.05});
  EXPECT_EQ(unreachable.statistic, 0.0);
  EXPECT_EQ(*unreachable.p_value, 1.0);
  EXPECT_FALSE(unreachable.drift_detected);
}

TEST(KsTest, SelfComparisonOfLargeStream) {
  std::mt19937_64 gen(31);
  const auto xs = normal_sample(gen, 100000, 0.0, 1.0);
  const auto s = kll_of(xs);
  const auto r = ks_test_eps(s, s, {0.05, 0.05});
  EXPECT_LE(r.distance, 2.0 * kll_rank_error_bound(200));
  EXPECT_FALSE(r.drift_detected);
}

TEST(Linf, SpecExamples) {
  CategoricalCountState even;
  for (const char* l : {"a", "b"}) even = categorical_update(even, l);
  EXPECT_EQ(linf_categorical(even, even, {0.0, 0.05}).distance, 0.0);
  EXPECT_FALSE(linf_categorical(even, even, {0.0, 0.05}).drift_detected);
  CategoricalCountState skewed;
  for (const char* l : {"a", "a", "a", "a", "b"}) skewed = categorical_update(skewed, l);
  EXPECT_NEAR(linf_categorical(even, skewed, {}).distance, 0.3, 1e-12);
  EXPECT_TRUE(linf_categorical(even, skewed, {0.29, 0.05}).drift_detected);
  EXPECT_FALSE(linf_categorical(even, skewed, {0.31, 0.05}).drift_detected);
  CategoricalCountState with_new;
  for (const char* l : {"a", "a", "a", "a", "z"}) with_new = categorical_update(with_new, l);
  CategoricalCountState only_a;
  only_a = categorical_update(only_a, "a");
  EXPECT_GE(linf_categorical(only_a, with_new, {}).distance, 0.2 - 1e-12);
}

TEST(Anomaly, ZeroStdFlagsAnyDeparture) {
  const std::vector<double> xs{2.0, std::nextafter(2.0, 3.0)};
  EXPECT_EQ(anomaly_flags(xs, {5, 2.0, 0.0}), (std::vector<bool>{false, true}));
}

TEST(Anomaly, NormalFlagRateMatchesTail) {
  std::mt19937_64 gen(17);
  const auto xs = normal_sample(gen, 100000, 0.0, 1.0);
  const auto flags = anomaly_flags(xs, {100000, 0.0, 1.0});
  const double rate = static_cast<double>(std::count(flags.begin(), flags.end(), true)) / xs.size();
  const double p = std::erfc(3.0 / std::sqrt(2.0));
  EXPECT_NEAR(rate, p, 3.0 * std::sqrt(p * (1 - p) / xs.size()));
}

TEST(Embedding, HandExamples) {
  Eigen::MatrixXd unit(1, 2);
  unit << 1, 0;
  EXPECT_NEAR(embedding_drift(unit, unit, 1.0).statistic, 1.0, 1e-15);
  EXPECT_FALSE(embedding_drift(unit, unit, 1.0).drift_detected);
  Eigen::MatrixXd ortho(1, 2);
  ortho << 0, 1;
  EXPECT_EQ(embedding_drift(ortho, unit, 1e-9).statistic, 0.0);
  EXPECT_TRUE(embedding_drift(ortho, unit, 1e-9).drift_detected);
  Eigen::MatrixXd basis(2, 2);
  basis << 1, 0, 0, 1;
  Eigen::MatrixXd diag(1, 2);
  diag << 1 / std::sqrt(2.0), 1 / std::sqrt(2.0);
  EXPECT_NEAR(embedding_drift(diag, basis, 0.5).distance, std::sqrt(2.0) / 2.0, 1e-12);
}

}  // namespace
}  // namespace modelmon
