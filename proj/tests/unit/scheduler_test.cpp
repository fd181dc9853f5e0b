#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "modelmon/baseline.hpp"
#include "modelmon/capture.hpp"
#include "modelmon/errors.hpp"
#include "modelmon/report_json.hpp"
#include "modelmon/scheduler.hpp"
#include "modelmon/time.hpp"
#include "test_support.hpp"

namespace modelmon {
namespace {

namespace fs = std::filesystem;
using namespace std::chrono_literals;

MetricsSink null_sink() {
  return [](const std::string&, double, UtcTime) {};
}

Schedule plain_schedule(std::uint64_t seed = 0) {
  Schedule s;
  s.name = "job";
  s.seed = seed;
  s.baseline = "/nonexistent/baseline";
  s.capture_root = "/nonexistent/capture";
  s.output_root = "/nonexistent/out";
  return s;
}

TEST(Jitter, UniformOverTheWindowByKolmogorovSmirnov) {
  const Schedule s = plain_schedule(11);
  const double span = std::chrono::duration_cast<std::chrono::milliseconds>(s.jitter_max).count();
  const UtcTime origin = parse_utc("2024-01-01T00:00:00Z");
  std::vector<double> xs;
  for (int i = 0; i < 10'000; ++i) {
    const auto j = jitter_for(s, origin + std::chrono::hours(i));
    ASSERT_GE(j.count(), 0);
    ASSERT_LT(j.count(), span);
    xs.push_back(static_cast<double>(j.count()) / span);
  }
  const double d = testing::ks_uniform_statistic(xs);
  const double p = testing::kolmogorov_series(d * std::sqrt(static_cast<double>(xs.size())));
  EXPECT_GT(p, 0.01) << "D = " << d;
}

TEST(Jitter, OneMinuteBucketsAreEvenlyFilled) {
  const Schedule s = plain_schedule(3);
  const UtcTime origin = parse_utc("2023-05-01T00:00:00Z");
  const int n = 10'000;
  const auto buckets = static_cast<std::size_t>(s.jitter_max.count());
  std::vector<int> counts(buckets, 0);
  for (int i = 0; i < n; ++i) {
    const auto j = jitter_for(s, origin + std::chrono::hours(i));
    ++counts[static_cast<std::size_t>(std::chrono::duration_cast<std::chrono::minutes>(j).count())];
  }
  const double expected = static_cast<double>(n) / static_cast<double>(buckets);
  const double sd = std::sqrt(expected * (1.0 - 1.0 / static_cast<double>(buckets)));
  for (std::size_t b = 0; b < buckets; ++b) EXPECT_LT(std::abs(counts[b] - expected), 5.0 * sd) << "minute " << b;
}

TEST(Jitter, PureFunctionOfSeedAndWindow) {
  const UtcTime w = parse_utc("2024-03-10T07:00:00Z");
  EXPECT_EQ(jitter_for(plain_schedule(5), w), jitter_for(plain_schedule(5), w));
  int differing = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed)
    if (jitter_for(plain_schedule(seed), w) != jitter_for(plain_schedule(seed + 100), w)) ++differing;
  EXPECT_GE(differing, 18);
}

TEST(Jitter, ZeroJitterStartsAtTheTopOfTheHour) {
  Schedule s = plain_schedule();
  s.jitter_max = 0min;
  const auto plan = next_run(s, parse_utc("2024-02-02T10:05:00Z"));
  EXPECT_EQ(plan.start, parse_utc("2024-02-02T11:00:00Z"));
}

TEST(NextRun, AnalyzesTheCurrentHourAndStartsAfterItCloses) {
  const Schedule s = plain_schedule(9);
  const auto plan = next_run(s, parse_utc("2024-02-02T10:05:00Z"));
  EXPECT_EQ(plan.window_start, parse_utc("2024-02-02T10:00:00Z"));
  EXPECT_EQ(plan.window_end, parse_utc("2024-02-02T11:00:00Z"));
  EXPECT_GE(plan.start, plan.window_end);
  EXPECT_LT(plan.start, plan.window_end + s.jitter_max);
  EXPECT_EQ(plan.start - plan.window_end, jitter_for(s, plan.window_start));
}

TEST(NextRunProperty, NeverStartsBeforeTheWindowCloses) {
  testing::for_each_case(2000, 81, [](std::mt19937_64& gen, std::size_t) {
    Schedule s = plain_schedule(gen());
    s.jitter_max = std::chrono::minutes(std::uniform_int_distribution<int>(0, 59)(gen));
    const UtcTime now(std::chrono::milliseconds(std::uniform_int_distribution<std::int64_t>(0, 4'000'000'000'000)(gen)));
    const auto plan = next_run(s, now);
    EXPECT_LE(plan.window_start, now);
    EXPECT_GT(plan.window_end, now);
    EXPECT_EQ(plan.window_end - plan.window_start, 1h);
    EXPECT_GE(plan.start, plan.window_end);
    EXPECT_LE(plan.start, plan.window_end + s.jitter_max);
  });
}

TEST(JobStatus, OnlyMovesForward) {
  JobRecord r;
  EXPECT_THROW(r.advance(JobStatus::pending), std::logic_error);
  r.advance(JobStatus::running);
  EXPECT_THROW(r.advance(JobStatus::running), std::logic_error);
  EXPECT_THROW(r.advance(JobStatus::pending), std::logic_error);
  r.advance(JobStatus::completed);
  for (auto s : {JobStatus::pending, JobStatus::running, JobStatus::completed, JobStatus::completed_with_violations,
                 JobStatus::failed})
    EXPECT_THROW(r.advance(s), std::logic_error);
  EXPECT_EQ(r.status, JobStatus::completed);

  JobRecord skip;
  skip.advance(JobStatus::failed);
  EXPECT_EQ(skip.status, JobStatus::failed);
}

TEST(JobStatus, NamesRoundTrip) {
  for (auto s : {JobStatus::pending, JobStatus::running, JobStatus::completed, JobStatus::completed_with_violations,
                 JobStatus::failed})
    EXPECT_EQ(job_status_from_string(to_string(s)), s);
  EXPECT_THROW((void)job_status_from_string("done"), ParseError);
}

JobRecord finished_record(const std::string& schedule, const std::string& window, JobStatus status,
                          std::size_t violations = 0) {
  JobRecord r;
  r.schedule = schedule;
  r.window_start = parse_utc(window);
  r.window_end = r.window_start + 1h;
  r.scheduled_at = r.window_end + 3min;
  r.started_at = r.scheduled_at;
  r.finished_at = r.scheduled_at + 2s;
  r.advance(JobStatus::running);
  r.advance(status);
  r.violation_count = violations;
  r.steps = {"profile", "validate"};
  return r;
}

TEST(JobStore, FreshStoreIsEmpty) {
  const auto dir = testing::scratch_dir("jobstore_fresh");
  EXPECT_TRUE(JobStore(dir / "jobs.jsonl").history().empty());
}

TEST(JobStore, HistoryIsNewestFirstAndRerunsReplace) {
  const auto dir = testing::scratch_dir("jobstore_order");
  JobStore store(dir / "nested" / "jobs.jsonl");
  store.record(finished_record("job", "2024-01-01T10:00:00Z", JobStatus::completed));
  store.record(finished_record("job", "2024-01-01T12:00:00Z", JobStatus::completed_with_violations, 2));
  store.record(finished_record("job", "2024-01-01T11:00:00Z", JobStatus::failed));
  auto h = store.history();
  ASSERT_EQ(h.size(), 3U);
  EXPECT_EQ(h[0].window_start, parse_utc("2024-01-01T12:00:00Z"));
  EXPECT_EQ(h[1].window_start, parse_utc("2024-01-01T11:00:00Z"));
  EXPECT_EQ(h[2].window_start, parse_utc("2024-01-01T10:00:00Z"));
  EXPECT_EQ(h[0].violation_count, 2U);
  EXPECT_EQ(h[1].status, JobStatus::failed);

  store.record(finished_record("job", "2024-01-01T11:00:00Z", JobStatus::completed));
  h = store.history();
  ASSERT_EQ(h.size(), 3U);
  EXPECT_EQ(h[1].status, JobStatus::completed);
}

TEST(JobStore, RecordDocumentRoundTrips) {
  auto r = finished_record("job", "2024-06-01T00:00:00Z", JobStatus::completed_with_violations, 4);
  r.note = "a note";
  r.item_count = 17;
  const auto back = job_record_from_document(to_document(r));
  EXPECT_EQ(back.schedule, r.schedule);
  EXPECT_EQ(back.window_start, r.window_start);
  EXPECT_EQ(back.window_end, r.window_end);
  EXPECT_EQ(back.scheduled_at, r.scheduled_at);
  EXPECT_EQ(back.started_at, r.started_at);
  EXPECT_EQ(back.finished_at, r.finished_at);
  EXPECT_EQ(back.status, r.status);
  EXPECT_EQ(back.violation_count, 4U);
  EXPECT_EQ(back.item_count, 17U);
  EXPECT_EQ(back.steps, r.steps);
  EXPECT_EQ(back.note, r.note);
  EXPECT_FALSE(back.error);
}

TEST(JobStore, CorruptLineIsAParseError) {
  const auto dir = testing::scratch_dir("jobstore_corrupt");
  std::ofstream(dir / "jobs.jsonl") << "{not json\n";
  EXPECT_THROW((void)JobStore(dir / "jobs.jsonl").history(), ParseError);
}

// ---------------------------------------------------------------------------
// Config

nlohmann::ordered_json minimal_config() {
  return {{"name", "hourly-monitor"}, {"baseline", "base"}, {"capture_root", "capture"}, {"output_root", "out"}};
}

TEST(ScheduleConfig, RelativePathsResolveAgainstTheConfigDirectory) {
  auto doc = minimal_config();
  doc["labels_root"] = "/abs/labels";
  const auto s = schedule_from_document(doc, "/etc/modelmon");
  EXPECT_EQ(s.baseline, fs::path("/etc/modelmon/base"));
  EXPECT_EQ(s.capture_root, fs::path("/etc/modelmon/capture"));
  EXPECT_EQ(s.output_root, fs::path("/etc/modelmon/out"));
  EXPECT_EQ(s.labels_root, fs::path("/abs/labels"));
  EXPECT_EQ(s.jitter_max, kDefaultJitter);
  EXPECT_EQ(s.cadence, "hourly");
}

TEST(ScheduleConfig, LoadedFromFile) {
  const auto dir = testing::scratch_dir("schedule_file");
  auto doc = minimal_config();
  doc["jitter_minutes"] = 5;
  doc["seed"] = 42;
  doc["problem_type"] = "binary_classification";
  doc["bias"] = {{"facet_column", "group"}, {"advantaged_value", "a"}, {"range", {-0.1, 0.1}}};
  std::ofstream(dir / "schedule.json") << doc.dump();
  const auto s = load_schedule(dir / "schedule.json");
  EXPECT_EQ(s.baseline, dir / "base");
  EXPECT_EQ(s.jitter_max, 5min);
  EXPECT_EQ(s.seed, 42U);
  EXPECT_EQ(s.problem_type, ProblemType::binary_classification);
  ASSERT_TRUE(s.bias);
  EXPECT_EQ(s.bias->facet_column, "group");
  EXPECT_DOUBLE_EQ(s.bias->range.low, -0.1);

  const auto again = schedule_from_document(to_document(s));
  EXPECT_EQ(to_document(again), to_document(s));
}

TEST(ScheduleConfig, Rejections) {
  auto unknown = minimal_config();
  unknown["cron"] = "*/5 * * * *";
  EXPECT_THROW((void)schedule_from_document(unknown), ConfigError);

  auto cadence = minimal_config();
  cadence["cadence"] = "daily";
  EXPECT_THROW((void)schedule_from_document(cadence), ConfigError);
  for (const char* ok : {"hourly", "@hourly", "0 * * * *"}) {
    cadence["cadence"] = ok;
    EXPECT_NO_THROW((void)schedule_from_document(cadence)) << ok;
  }

  auto missing = minimal_config();
  missing.erase("baseline");
  EXPECT_THROW((void)schedule_from_document(missing), ConfigError);

  auto jitter = minimal_config();
  jitter["jitter_minutes"] = -1;
  EXPECT_THROW((void)schedule_from_document(jitter), ConfigError);

  auto bias = minimal_config();
  bias["bias"] = {{"facet_column", "g"}, {"advantaged_value", "a"}, {"range", {0.2, -0.2}}};
  EXPECT_THROW((void)schedule_from_document(bias), ConfigError);

  EXPECT_THROW((void)schedule_from_document(nlohmann::ordered_json::array()), ConfigError);

  const auto dir = testing::scratch_dir("schedule_bad_file");
  std::ofstream(dir / "bad.json") << "{oops";
  EXPECT_THROW((void)load_schedule(dir / "bad.json"), ConfigError);
}

// ---------------------------------------------------------------------------
// Pipeline

struct PipelineFixture {
  fs::path root;
  Schedule schedule;
  UtcTime window = parse_utc("2024-04-01T10:00:00Z");
  std::vector<std::pair<double, std::string>> rows;

  explicit PipelineFixture(const std::string& name) : root(testing::scratch_dir(name)) {
    std::mt19937_64 gen(17);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::ostringstream csv;
    csv << "x,colour\n";
    for (int i = 0; i < 300; ++i) {
      rows.emplace_back(normal(gen), i % 3 == 0 ? "red" : "blue");
      csv << rows.back().first << ',' << rows.back().second << '\n';
    }
    save_baseline(suggest_baseline(profile_csv(csv.str())), root / "baseline");
    schedule.name = "pipeline";
    schedule.baseline = root / "baseline";
    schedule.capture_root = root / "capture";
    schedule.output_root = root / "out";
  }

  void write_captures(const std::vector<CaptureRecord>& records) const {
    const fs::path dir = schedule.capture_root / partition_path(window);
    fs::create_directories(dir);
    std::ofstream f(dir / "0000000001-0.jsonl");
    for (const auto& r : records) f << to_json_line(r) << '\n';
  }

  void write_labels(const std::vector<GroundTruthRecord>& labels) const {
    const fs::path dir = *schedule.labels_root / partition_path(window);
    fs::create_directories(dir);
    std::ofstream f(dir / "labels.jsonl");
    for (const auto& l : labels) f << to_json_line(l) << '\n';
  }

  std::vector<CaptureRecord> baseline_captures(bool drop_colour = false) const {
    std::vector<CaptureRecord> out;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      nlohmann::ordered_json in{{"x", rows[i].first}};
      if (!drop_colour) in["colour"] = rows[i].second;
      out.push_back({"e" + std::to_string(i), window + std::chrono::seconds(i), in.dump(), "0.5"});
    }
    return out;
  }

  UtcTime after_close() const { return window + 1h + 7min; }
};

TEST(Pipeline, RefusesAWindowThatHasNotClosed) {
  PipelineFixture fx("pipeline_open");
  EXPECT_THROW((void)run_pipeline(fx.schedule, fx.window, fx.window + 59min, null_sink()), ValueError);
  EXPECT_FALSE(fs::exists(fx.schedule.output_root));
  EXPECT_NO_THROW((void)run_pipeline(fx.schedule, fx.window, fx.window + 1h, null_sink()));
}

TEST(Pipeline, DataMatchingTheBaselineCompletesCleanly) {
  PipelineFixture fx("pipeline_clean");
  fx.write_captures(fx.baseline_captures());
  const auto job = run_pipeline(fx.schedule, fx.window + 25min, fx.after_close(), null_sink());
  EXPECT_EQ(job.status, JobStatus::completed) << job.error.value_or("");
  EXPECT_EQ(job.violation_count, 0U);
  EXPECT_EQ(job.item_count, fx.rows.size());
  EXPECT_EQ(job.window_start, fx.window);
  EXPECT_EQ(job.window_end, fx.window + 1h);
  EXPECT_EQ(job.steps, (std::vector<std::string>{"profile", "validate"}));
  const fs::path out = window_output_dir(fx.schedule, fx.window);
  EXPECT_EQ(out, fx.schedule.output_root / "2024/04/01/10");
  EXPECT_TRUE(fs::exists(out / kStatisticsFile));
  const auto violations = read_json_file(out / kViolationsFile);
  EXPECT_TRUE(violations.at("violations").empty());
}

TEST(Pipeline, MissingColumnCompletesWithViolations) {
  PipelineFixture fx("pipeline_missing");
  fx.write_captures(fx.baseline_captures(true));
  const auto job = run_pipeline(fx.schedule, fx.window, fx.after_close(), null_sink());
  EXPECT_EQ(job.status, JobStatus::completed_with_violations);
  EXPECT_GE(job.violation_count, 1U);
  const auto doc = read_json_file(window_output_dir(fx.schedule, fx.window) / kViolationsFile);
  bool named = false;
  for (const auto& v : doc.at("violations"))
    if (v.value("column", std::string()) == "colour") named = true;
  EXPECT_TRUE(named) << doc.dump();
}

TEST(Pipeline, EmptyWindowCompletesWithANote) {
  PipelineFixture fx("pipeline_empty");
  const auto job = run_pipeline(fx.schedule, fx.window, fx.after_close(), null_sink());
  EXPECT_EQ(job.status, JobStatus::completed) << job.error.value_or("");
  EXPECT_EQ(job.item_count, 0U);
  EXPECT_EQ(job.violation_count, 0U);
  ASSERT_TRUE(job.note);
  EXPECT_NE(job.note->find("no capture data"), std::string::npos);
}

TEST(Pipeline, MissingBaselineFailsWithoutThrowing) {
  PipelineFixture fx("pipeline_nobaseline");
  fx.schedule.baseline = fx.root / "absent";
  fx.write_captures(fx.baseline_captures());
  const auto job = run_pipeline(fx.schedule, fx.window, fx.after_close(), null_sink());
  EXPECT_EQ(job.status, JobStatus::failed);
  EXPECT_TRUE(job.error);
  EXPECT_TRUE(job.finished_at);
}

TEST(Pipeline, JoinRunsBeforeTheAnalysisSteps) {
  PipelineFixture fx("pipeline_labels");
  fx.schedule.labels_root = fx.root / "labels";
  const auto captures = fx.baseline_captures();
  fx.write_captures(captures);
  std::vector<GroundTruthRecord> labels;
  for (std::size_t i = 0; i < captures.size(); i += 2) labels.push_back({captures[i].event_id, "0.25"});
  fx.write_labels(labels);

  std::vector<std::string> gauges;
  const auto job = run_pipeline(fx.schedule, fx.window, fx.after_close(),
                                [&](const std::string& name, double, UtcTime w) {
                                  EXPECT_EQ(w, fx.window);
                                  gauges.push_back(name);
                                });
  EXPECT_EQ(job.status, JobStatus::completed) << job.error.value_or("");
  ASSERT_FALSE(job.steps.empty());
  EXPECT_EQ(job.steps.front(), "join");
  EXPECT_EQ(job.steps, (std::vector<std::string>{"join", "profile", "validate", "quality"}));
  EXPECT_TRUE(fs::exists(fx.schedule.joined_root() / partition_path(fx.window) / kJoinedFile));

  const auto report = read_json_file(window_output_dir(fx.schedule, fx.window) / "model_quality.json");
  EXPECT_EQ(report.at("dataset").at("item_count").get<std::size_t>(), labels.size());
  EXPECT_DOUBLE_EQ(report.at("regression_metrics").at("mae").at("value").get<double>(), 0.25);
  EXPECT_NE(std::find(gauges.begin(), gauges.end(), "quality.mae"), gauges.end());
  EXPECT_NE(std::find(gauges.begin(), gauges.end(), "item_count"), gauges.end());
}

TEST(Pipeline, QualityConstraintBreachIsAViolation) {
  PipelineFixture fx("pipeline_quality");
  fx.schedule.labels_root = fx.root / "labels";
  const auto captures = fx.baseline_captures();
  fx.write_captures(captures);
  std::vector<GroundTruthRecord> labels;
  for (const auto& c : captures) labels.push_back({c.event_id, "3.5"});
  fx.write_labels(labels);
  QualityConstraints qc;
  qc.problem = ProblemType::regression;
  qc.metrics = {{"mae", {0.5, ComparisonOperator::GreaterThanThreshold}}};
  write_json_file(fx.schedule.baseline / "quality_constraints.json", constraints_document(qc));

  const auto job = run_pipeline(fx.schedule, fx.window, fx.after_close(), null_sink());
  EXPECT_EQ(job.status, JobStatus::completed_with_violations);
  EXPECT_EQ(job.violation_count, 1U);
  const auto doc = read_json_file(window_output_dir(fx.schedule, fx.window) / kViolationsFile);
  ASSERT_EQ(doc.at("violations").size(), 1U);
  EXPECT_EQ(doc.at("violations")[0].at("check_name"), "metric_threshold_check");
}

TEST(Scheduler, LoopSleepsUntilEachJitteredStart) {
  PipelineFixture fx("scheduler_loop");
  fx.schedule.seed = 4;
  UtcTime now = parse_utc("2024-04-01T10:05:00Z");
  std::vector<UtcTime> sleeps;
  JobStore store(fx.root / "jobs.jsonl");
  Scheduler sched(
      fx.schedule, store, null_sink(), [&] { return now; },
      [&](UtcTime until) {
        sleeps.push_back(until);
        now = until;
      });
  sched.run_loop(2);

  ASSERT_EQ(sleeps.size(), 2U);
  EXPECT_EQ(sleeps[0], parse_utc("2024-04-01T11:00:00Z") + jitter_for(fx.schedule, parse_utc("2024-04-01T10:00:00Z")));
  EXPECT_EQ(sleeps[1], parse_utc("2024-04-01T12:00:00Z") + jitter_for(fx.schedule, parse_utc("2024-04-01T11:00:00Z")));
  const auto h = store.history();
  ASSERT_EQ(h.size(), 2U);
  EXPECT_EQ(h[0].window_start, parse_utc("2024-04-01T11:00:00Z"));
  EXPECT_EQ(h[1].window_start, parse_utc("2024-04-01T10:00:00Z"));
  for (const auto& r : h) {
    EXPECT_EQ(r.status, JobStatus::completed);
    ASSERT_TRUE(r.started_at);
    EXPECT_GE(*r.started_at, r.window_end);
    EXPECT_EQ(r.scheduled_at, *r.started_at);
  }
}

TEST(Scheduler, RunOnceAnalyzesThePreviousHour) {
  PipelineFixture fx("scheduler_once");
  fx.write_captures(fx.baseline_captures());
  JobStore store(fx.root / "jobs.jsonl");
  Scheduler sched(fx.schedule, store, null_sink(), [&] { return fx.window + 1h + 30s; });
  const auto r = sched.run_once();
  EXPECT_EQ(r.window_start, fx.window);
  EXPECT_EQ(r.item_count, fx.rows.size());
  EXPECT_EQ(store.history().size(), 1U);
}

}  // namespace
}  // namespace modelmon
