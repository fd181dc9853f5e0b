#pragma once

// Hourly monitoring schedules: jittered start times, the join-then-analyze
// pipeline for one closed window, and a JSON-lines job history.

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "modelmon/attribution.hpp"
#include "modelmon/baseline.hpp"
#include "modelmon/bias.hpp"
#include "modelmon/capture.hpp"
#include "modelmon/quality.hpp"
#include "modelmon/time.hpp"

namespace modelmon {

inline constexpr std::chrono::minutes kDefaultJitter{20};

struct BiasCheckConfig {
  std::string facet_column;     // input column holding the sensitive attribute
  std::string advantaged_value; // cell value of the advantaged group
  AcceptableRange range;
};

struct Schedule {
  std::string name;
  std::string cadence = "hourly";
  std::chrono::minutes jitter_max = kDefaultJitter;
  std::filesystem::path baseline;  // directory with statistics.json / constraints.json
  std::filesystem::path capture_root;
  std::optional<std::filesystem::path> labels_root;
  std::filesystem::path output_root;
  std::uint64_t seed = 0;
  ProblemType problem_type = ProblemType::regression;
  std::optional<BiasCheckConfig> bias;
  std::optional<std::filesystem::path> attribution_baseline;
  double ndcg_threshold = kDefaultNdcgThreshold;

  /// Throws ConfigError on an unsupported cadence or negative jitter.
  void validate() const;
  /// Joined output lives next to the window reports.
  [[nodiscard]] std::filesystem::path joined_root() const { return output_root / "joined"; }
};

/// Accepts "hourly", "@hourly" and "0 * * * *".
[[nodiscard]] bool is_hourly_cadence(const std::string& cadence);

/// Reads the schedule config; relative paths resolve against the file's directory.
[[nodiscard]] Schedule schedule_from_document(const nlohmann::ordered_json& doc,
                                              const std::filesystem::path& base_dir = {});
[[nodiscard]] Schedule load_schedule(const std::filesystem::path& path);
[[nodiscard]] nlohmann::ordered_json to_document(const Schedule& schedule);

/// Per-job jitter in [0, jitter_max), a pure function of (seed, window start).
[[nodiscard]] std::chrono::milliseconds jitter_for(const Schedule& schedule, UtcTime window_start);

struct PlannedRun {
  UtcTime window_start{};
  UtcTime window_end{};
  UtcTime start{};
};

/// The run for the hour containing `now`: it analyzes [floor(now), floor(now)+1h)
/// and starts at the window end plus jitter.
[[nodiscard]] PlannedRun next_run(const Schedule& schedule, UtcTime now);

enum class JobStatus { pending, running, completed, completed_with_violations, failed };

[[nodiscard]] std::string to_string(JobStatus s);
[[nodiscard]] JobStatus job_status_from_string(const std::string& s);

struct JobRecord {
  std::string schedule;
  UtcTime window_start{};
  UtcTime window_end{};
  UtcTime scheduled_at{};
  std::optional<UtcTime> started_at;
  std::optional<UtcTime> finished_at;
  JobStatus status = JobStatus::pending;
  std::size_t violation_count = 0;
  std::uint64_t item_count = 0;
  std::vector<std::string> steps;  // in execution order
  std::optional<std::string> note;
  std::optional<std::string> error;

  /// Moves the status forward; throws std::logic_error on a backward move.
  void advance(JobStatus next);
};

[[nodiscard]] nlohmann::ordered_json to_document(const JobRecord& record);
[[nodiscard]] JobRecord job_record_from_document(const nlohmann::ordered_json& doc);

/// Receives `metric <name> <value> <window>` gauges.
using MetricsSink = std::function<void(const std::string& name, double value, UtcTime window_start)>;

/// Writes gauge lines to stdout.
[[nodiscard]] MetricsSink stdout_metrics_sink();

/// Analyzes one closed window. Steps run in order: join (when labels are
/// configured), profile, validate, quality (when labeled rows exist), bias and
/// attribution (when configured). Writes statistics.json,
/// constraint_violations.json and, with labels, model_quality.json under
/// output_root/<partition>. Throws ValueError when `now` precedes the window
/// end; analysis errors yield a failed record instead of an exception.
[[nodiscard]] JobRecord run_pipeline(const Schedule& schedule, UtcTime window_start, UtcTime now,
                                     const MetricsSink& metrics, std::optional<UtcTime> scheduled_at = {});

[[nodiscard]] std::filesystem::path window_output_dir(const Schedule& schedule, UtcTime window_start);

/// Append-only JSON-lines history keyed by (schedule, window start); the last
/// record for a key wins.
class JobStore {
 public:
  explicit JobStore(std::filesystem::path path);
  void record(const JobRecord& record);
  /// Newest window first.
  [[nodiscard]] std::vector<JobRecord> history() const;
  [[nodiscard]] const std::filesystem::path& path() const noexcept { return path_; }

 private:
  std::filesystem::path path_;
};

/// Single-threaded loop over one schedule with an injectable clock and sleep.
class Scheduler {
 public:
  using Clock = std::function<UtcTime()>;
  using Sleeper = std::function<void(UtcTime until)>;

  Scheduler(Schedule schedule, JobStore& store, MetricsSink metrics, Clock clock = utc_now, Sleeper sleeper = {});

  /// Runs the most recently closed window immediately.
  JobRecord run_once();
  /// Sleeps until each planned start and runs it, `iterations` times (0 = forever).
  void run_loop(std::size_t iterations = 0);

 private:
  Schedule schedule_;
  JobStore& store_;
  MetricsSink metrics_;
  Clock clock_;
  Sleeper sleeper_;
};

}  // namespace modelmon
