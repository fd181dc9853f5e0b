#include <algorithm>
#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "modelmon/bias.hpp"
#include "modelmon/errors.hpp"
#include "test_support.hpp"

namespace modelmon {
namespace {

using testing::for_each_case;

FacetedRow row(Facet f, int label, std::optional<int> prediction = std::nullopt) { return {label, prediction, f}; }

std::vector<FacetedRow> random_rows(std::mt19937_64& gen, std::size_t n, bool with_predictions) {
  std::vector<FacetedRow> out(n);
  for (auto& r : out) {
    r.facet = gen() % 2 == 0 ? Facet::advantaged : Facet::disadvantaged;
    r.label = static_cast<int>(gen() % 2);
    if (with_predictions) r.prediction = static_cast<int>(gen() % 2);
  }
  return out;
}

TEST(Dpl, HandExamples) {
  std::vector<FacetedRow> rows;
  for (int i = 0; i < 4; ++i) rows.push_back(row(Facet::advantaged, i < 3 ? 1 : 0));
  for (int i = 0; i < 4; ++i) rows.push_back(row(Facet::disadvantaged, i < 1 ? 1 : 0));
  EXPECT_EQ(dpl(rows), 0.5);
  for (auto& r : rows) r.facet = r.facet == Facet::advantaged ? Facet::disadvantaged : Facet::advantaged;
  EXPECT_EQ(dpl(rows), -0.5);
  const std::vector<FacetedRow> even{row(Facet::advantaged, 1), row(Facet::advantaged, 0),
                                     row(Facet::disadvantaged, 0), row(Facet::disadvantaged, 1)};
  EXPECT_EQ(dpl(even), 0.0);
  const std::vector<FacetedRow> one_sided{row(Facet::advantaged, 1)};
  EXPECT_THROW((void)dpl(one_sided), InsufficientDataError);
}

TEST(AccuracyDifference, Extremes) {
  const std::vector<FacetedRow> rows{row(Facet::advantaged, 1, 1), row(Facet::advantaged, 0, 0),
                                     row(Facet::disadvantaged, 1, 0), row(Facet::disadvantaged, 0, 1)};
  EXPECT_EQ(accuracy_difference(rows), 1.0);
  const std::vector<FacetedRow> same{row(Facet::advantaged, 1, 1), row(Facet::disadvantaged, 0, 0)};
  EXPECT_EQ(accuracy_difference(same), 0.0);
  const std::vector<FacetedRow> unpredicted{row(Facet::advantaged, 1), row(Facet::disadvantaged, 0, 0)};
  EXPECT_THROW((void)accuracy_difference(unpredicted), ValueError);
}

TEST(BiasProperty, MetricsMatchBruteForce) {
  for_each_case(1000, 40, [](std::mt19937_64& gen, std::size_t) {
    const auto rows = random_rows(gen, 2 + gen() % 1000, true);
    double pos[2] = {0, 0};
    double correct[2] = {0, 0};
    double size[2] = {0, 0};
    for (const auto& r : rows) {
      const int g = r.facet == Facet::advantaged ? 0 : 1;
      size[g] += 1;
      pos[g] += r.label;
      correct[g] += r.label == *r.prediction ? 1 : 0;
    }
    if (size[0] == 0 || size[1] == 0) {
      EXPECT_THROW((void)dpl(rows), InsufficientDataError);
      return;
    }
    EXPECT_NEAR(dpl(rows), pos[0] / size[0] - pos[1] / size[1], 1e-15);
    EXPECT_NEAR(accuracy_difference(rows), correct[0] / size[0] - correct[1] / size[1], 1e-15);
    EXPECT_GE(dpl(rows), -1.0);
    EXPECT_LE(dpl(rows), 1.0);
  });
}

TEST(AlarmRule, Arithmetic) {
  EXPECT_TRUE(alarm_rule(0.5, 0.1, {0.0, 0.0}));
  EXPECT_FALSE(alarm_rule(0.05, 0.1, {0.0, 0.0}));
  EXPECT_FALSE(alarm_rule(0.1, 5.0, {0.0, 0.2}));
  EXPECT_FALSE(alarm_rule(0.1, 0.0, {0.0, 0.2}));
  EXPECT_TRUE(alarm_rule(-0.5, 0.1, {-0.2, 0.2}));
}

TEST(BiasAlarm, ConfigValidation) {
  BiasAlarmConfig cfg;
  cfg.range = {0.3, -0.3};
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg.range = {};
  cfg.n_boot = 1;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(BiasAlarm, ValueUsesCappedPrefix) {
  std::vector<FacetedRow> rows;
  for (int i = 0; i < 100; ++i) rows.push_back(row(i % 2 == 0 ? Facet::advantaged : Facet::disadvantaged, i % 2 == 0));
  for (int i = 0; i < 100; ++i) rows.push_back(row(i % 2 == 0 ? Facet::advantaged : Facet::disadvantaged, 0));
  BiasAlarmConfig cfg;
  cfg.sample_cap = 100;
  const auto d = bias_alarm(rows, dpl, cfg);
  EXPECT_EQ(d.metric_value, 1.0);
  cfg.sample_cap = 200;
  EXPECT_EQ(bias_alarm(rows, dpl, cfg).metric_value, 0.5);
}

TEST(BiasAlarmProperty, RangeMonotonicityAndDeterminism) {
  for_each_case(300, 41, [](std::mt19937_64& gen, std::size_t) {
    const auto rows = random_rows(gen, 20 + gen() % 300, false);
    std::uniform_real_distribution<double> u(-0.5, 0.5);
    BiasAlarmConfig cfg;
    cfg.seed = gen();
    const double a = u(gen);
    const double b = u(gen);
    cfg.range = {std::min(a, b), std::max(a, b)};
    const auto base = bias_alarm(rows, dpl, cfg);
    EXPECT_EQ(base.alarm, bias_alarm(rows, dpl, cfg).alarm);
    EXPECT_EQ(base.bootstrap_stddev, bias_alarm(rows, dpl, cfg).bootstrap_stddev);
    EXPECT_EQ(base.alarm, alarm_rule(base.metric_value, base.bootstrap_stddev, cfg.range));
    auto wider = cfg;
    wider.range = {cfg.range.low - 0.1, cfg.range.high + 0.1};
    if (!base.alarm) {
      EXPECT_FALSE(bias_alarm(rows, dpl, wider).alarm);
    }
    auto narrower = cfg;
    const double mid = (cfg.range.low + cfg.range.high) / 2.0;
    narrower.range = {mid, mid};
    if (base.alarm) {
      EXPECT_TRUE(bias_alarm(rows, dpl, narrower).alarm);
    }
  });
}

TEST(Population, ExactCountsAndDpl) {
  const SyntheticPopulation pop;
  EXPECT_NEAR(pop.true_dpl(), -0.199, 1e-12);
  const auto batch = pop.build(3);
  ASSERT_EQ(batch.rows.size(), 20000u);
  EXPECT_NEAR(dpl(batch.rows), -0.199, 1e-12);
  EXPECT_EQ(pop.build(3).rows.size(), batch.rows.size());
  bool same = true;
  const auto again = pop.build(3);
  for (std::size_t i = 0; i < batch.rows.size(); ++i)
    same = same && batch.rows[i].label == again.rows[i].label && batch.rows[i].facet == again.rows[i].facet;
  EXPECT_TRUE(same);
}

TEST(CaseStudy, StandardConfigs) {
  const auto cfgs = standard_case_study_configs(-0.199);
  ASSERT_EQ(cfgs.size(), 3u);
  EXPECT_NEAR(cfgs[0].range.low, -0.2189, 1e-12);
  EXPECT_NEAR(cfgs[0].range.high, 0.2189, 1e-12);
  EXPECT_NEAR(cfgs[1].range.low, -0.10945, 1e-12);
  EXPECT_NEAR(cfgs[1].range.high, 0.10945, 1e-12);
  EXPECT_EQ(cfgs[2].range.low, 0.0);
  EXPECT_EQ(cfgs[2].range.high, 0.0);
}

TEST(CaseStudy, AlarmRatesMoveWithSampleSize) {
  const SyntheticPopulation pop;
  const auto batch = pop.build(0);
  CaseStudyOptions opts;
  opts.repeats = 60;
  const auto cells = bias_case_study(batch, standard_case_study_configs(pop.true_dpl()), {50, 2000}, opts);
  ASSERT_EQ(cells.size(), 6u);
  auto cell = [&](const std::string& label, std::size_t size) {
    for (const auto& c : cells)
      if (c.config_label == label && c.sample_size == size) return c;
    ADD_FAILURE() << "missing cell " << label << " " << size;
    return CaseStudyCell{};
  };
  const std::string none = cells[0].config_label;
  const std::string high = cells.back().config_label;
  EXPECT_LE(cell(none, 2000).alarm_fraction(), cell(none, 50).alarm_fraction());
  EXPECT_GE(cell(high, 2000).alarm_fraction(), cell(high, 50).alarm_fraction());
  EXPECT_EQ(cell(high, 2000).decision_accuracy(pop.true_dpl()), cell(high, 2000).alarm_fraction());
  EXPECT_EQ(cell(none, 2000).decision_accuracy(pop.true_dpl()), 1.0 - cell(none, 2000).alarm_fraction());
  const auto again = bias_case_study(batch, standard_case_study_configs(pop.true_dpl()), {50, 2000}, opts);
  for (std::size_t i = 0; i < cells.size(); ++i) EXPECT_EQ(cells[i].alarms, again[i].alarms);
}

TEST(CaseStudy, CsvHeader) {
  CaseStudyCell c{"no_bias", {-0.2, 0.2}, 200, 100, 5};
  const auto csv = case_study_csv({c});
  EXPECT_EQ(csv.substr(0, csv.find('\n')),
            "config_label,range_low,range_high,sample_size,repeats,alarms,alarm_fraction");
  EXPECT_NE(csv.find("no_bias,-0.2,0.2,200,100,5,0.05"), std::string::npos);
}

}  // namespace
}  // namespace modelmon
