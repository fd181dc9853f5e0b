#include "modelmon/scheduler.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <map>
#include <thread>

#include "modelmon/csv.hpp"
#include "modelmon/errors.hpp"
#include "modelmon/report_json.hpp"
#include "modelmon/rng.hpp"

namespace modelmon {

namespace fs = std::filesystem;
using std::chrono::hours;
using std::chrono::milliseconds;

namespace {

constexpr const char* kQualityReportFile = "model_quality.json";
constexpr const char* kQualityConstraintsFile = "quality_constraints.json";
constexpr const char* kAttributionObservationFile = "attribution.json";

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

std::optional<double> to_double(std::string_view s) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

std::string cell_text(const nlohmann::json& v) {
  if (v.is_null()) return "";
  if (v.is_string()) return v.get<std::string>();
  return v.dump();
}

/// Input payload to named cells: a JSON object, or a CSV line in baseline column order.
std::vector<std::pair<std::string, std::string>> input_cells(const std::string& payload,
                                                              const std::vector<std::string>& baseline_columns) {
  std::vector<std::pair<std::string, std::string>> out;
  const std::string text = trim(payload);
  if (!text.empty() && text.front() == '{') {
    nlohmann::ordered_json j;
    try {
      j = nlohmann::ordered_json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(std::string("input payload: ") + e.what());
    }
    for (const auto& [key, value] : j.items()) out.emplace_back(key, cell_text(nlohmann::json(value)));
    return out;
  }
  const auto fields = parse_csv_line(text);
  for (std::size_t i = 0; i < fields.size(); ++i)
    out.emplace_back(i < baseline_columns.size() ? baseline_columns[i] : "column_" + std::to_string(i + 1), fields[i]);
  return out;
}

struct WindowTable {
  CsvTable table;
  std::vector<std::map<std::string, std::string>> by_name;  // row cells keyed by column
};

WindowTable build_table(const std::vector<CaptureRecord>& records, const std::vector<std::string>& baseline_columns) {
  WindowTable w;
  std::vector<std::string> seen;
  for (const auto& r : records) {
    std::map<std::string, std::string> row;
    for (auto& [name, cell] : input_cells(r.input, baseline_columns)) {
      if (std::find(seen.begin(), seen.end(), name) == seen.end()) seen.push_back(name);
      row[name] = std::move(cell);
    }
    w.by_name.push_back(std::move(row));
  }
  for (const auto& c : baseline_columns)
    if (std::find(seen.begin(), seen.end(), c) != seen.end()) w.table.header.push_back(c);
  for (const auto& c : seen)
    if (std::find(w.table.header.begin(), w.table.header.end(), c) == w.table.header.end()) w.table.header.push_back(c);
  for (const auto& row : w.by_name) {
    std::vector<std::string> cells;
    cells.reserve(w.table.header.size());
    for (const auto& c : w.table.header) {
      const auto it = row.find(c);
      cells.push_back(it == row.end() ? std::string() : it->second);
    }
    w.table.rows.push_back(std::move(cells));
  }
  return w;
}

/// Output payload: a number, or an object with "prediction" and optional "score".
std::pair<double, std::optional<double>> parse_prediction(const std::string& payload) {
  const std::string text = trim(payload);
  if (auto v = to_double(text)) return {*v, std::nullopt};
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error&) {
    throw ValueError("output payload is neither a number nor a JSON object: '" + text + "'");
  }
  if (j.is_number()) return {j.get<double>(), std::nullopt};
  if (!j.is_object() || !j.contains("prediction") || !j.at("prediction").is_number())
    throw ValueError("output payload lacks a numeric 'prediction'");
  std::optional<double> score;
  if (j.contains("score") && j.at("score").is_number()) score = j.at("score").get<double>();
  return {j.at("prediction").get<double>(), score};
}

double parse_label(const std::string& label) {
  if (auto v = to_double(trim(label))) return *v;
  throw ValueError("ground truth label is not numeric: '" + label + "'");
}

Violation quality_violation(const QualityViolation& v) {
  Violation out;
  out.check_name = "metric_threshold_check";
  out.column = v.metric;
  if (v.missing) {
    out.description = "Metric '" + v.metric + "' is missing from the quality report.";
    out.observed = nullptr;
  } else {
    out.description = "Metric '" + v.metric + "' breached its " + to_string(v.comparison_operator) + " threshold.";
    out.observed = {{"value", *v.value},
                    {"standard_deviation", v.standard_deviation ? nlohmann::ordered_json(*v.standard_deviation)
                                                                : nlohmann::ordered_json("NaN")}};
  }
  out.expected = {{"threshold", v.threshold}, {"comparison_operator", to_string(v.comparison_operator)}};
  return out;
}

fs::path resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

}  // namespace

bool is_hourly_cadence(const std::string& cadence) {
  return cadence == "hourly" || cadence == "@hourly" || cadence == "0 * * * *";
}

void Schedule::validate() const {
  if (name.empty()) throw ConfigError("schedule: name must not be empty");
  if (!is_hourly_cadence(cadence)) throw ConfigError("schedule: only hourly cadence is supported, got '" + cadence + "'");
  if (jitter_max.count() < 0) throw ConfigError("schedule: jitter must be >= 0");
  if (bias && !(bias->range.low <= bias->range.high)) throw ConfigError("schedule: bias range low exceeds high");
}

Schedule schedule_from_document(const nlohmann::ordered_json& doc, const fs::path& base_dir) {
  if (!doc.is_object()) throw ConfigError("schedule: config is not a JSON object");
  static const std::vector<std::string> known{"name",         "cadence",      "jitter_minutes", "baseline",
                                              "capture_root", "labels_root",  "output_root",    "seed",
                                              "problem_type", "bias",         "attribution_baseline",
                                              "ndcg_threshold"};
  for (const auto& [key, _] : doc.items())
    if (std::find(known.begin(), known.end(), key) == known.end()) throw ConfigError("schedule: unknown key '" + key + "'");
  auto str = [&](const char* key) {
    if (!doc.contains(key) || !doc.at(key).is_string()) throw ConfigError(std::string("schedule: '") + key + "' must be a string");
    return doc.at(key).get<std::string>();
  };
  Schedule s;
  s.name = str("name");
  if (doc.contains("cadence")) s.cadence = str("cadence");
  if (doc.contains("jitter_minutes")) {
    if (!doc.at("jitter_minutes").is_number_integer()) throw ConfigError("schedule: 'jitter_minutes' must be an integer");
    s.jitter_max = std::chrono::minutes(doc.at("jitter_minutes").get<std::int64_t>());
  }
  s.baseline = resolve(base_dir, str("baseline"));
  s.capture_root = resolve(base_dir, str("capture_root"));
  if (doc.contains("labels_root") && !doc.at("labels_root").is_null()) s.labels_root = resolve(base_dir, str("labels_root"));
  s.output_root = resolve(base_dir, str("output_root"));
  if (doc.contains("seed")) {
    if (!doc.at("seed").is_number_unsigned()) throw ConfigError("schedule: 'seed' must be a nonnegative integer");
    s.seed = doc.at("seed").get<std::uint64_t>();
  }
  if (doc.contains("problem_type")) s.problem_type = problem_type_from_string(str("problem_type"));
  if (doc.contains("bias")) {
    const auto& b = doc.at("bias");
    try {
      BiasCheckConfig cfg;
      cfg.facet_column = b.at("facet_column").get<std::string>();
      cfg.advantaged_value = b.at("advantaged_value").get<std::string>();
      cfg.range = {b.at("range").at(0).get<double>(), b.at("range").at(1).get<double>()};
      s.bias = cfg;
    } catch (const nlohmann::json::exception&) {
      throw ConfigError("schedule: 'bias' needs facet_column, advantaged_value and range [low, high]");
    }
  }
  if (doc.contains("attribution_baseline")) s.attribution_baseline = resolve(base_dir, str("attribution_baseline"));
  if (doc.contains("ndcg_threshold")) {
    if (!doc.at("ndcg_threshold").is_number()) throw ConfigError("schedule: 'ndcg_threshold' must be a number");
    s.ndcg_threshold = doc.at("ndcg_threshold").get<double>();
  }
  s.validate();
  return s;
}

Schedule load_schedule(const fs::path& path) {
  nlohmann::ordered_json doc;
  try {
    doc = read_json_file(path);
  } catch (const ParseError& e) {
    throw ConfigError(e.what());
  }
  return schedule_from_document(doc, path.parent_path());
}

nlohmann::ordered_json to_document(const Schedule& s) {
  nlohmann::ordered_json doc;
  doc["name"] = s.name;
  doc["cadence"] = s.cadence;
  doc["jitter_minutes"] = s.jitter_max.count();
  doc["baseline"] = s.baseline.string();
  doc["capture_root"] = s.capture_root.string();
  doc["labels_root"] = s.labels_root ? nlohmann::ordered_json(s.labels_root->string()) : nlohmann::ordered_json();
  doc["output_root"] = s.output_root.string();
  doc["seed"] = s.seed;
  doc["problem_type"] = to_string(s.problem_type);
  if (s.bias)
    doc["bias"] = {{"facet_column", s.bias->facet_column},
                   {"advantaged_value", s.bias->advantaged_value},
                   {"range", {s.bias->range.low, s.bias->range.high}}};
  if (s.attribution_baseline) doc["attribution_baseline"] = s.attribution_baseline->string();
  doc["ndcg_threshold"] = s.ndcg_threshold;
  return doc;
}

milliseconds jitter_for(const Schedule& schedule, UtcTime window_start) {
  const auto span = std::chrono::duration_cast<milliseconds>(schedule.jitter_max).count();
  if (span <= 0) return milliseconds(0);
  const std::uint64_t word =
      mix_seed(schedule.seed, {static_cast<std::uint64_t>(epoch_millis(window_start)), 0x6a6974746572ULL});
  return milliseconds(static_cast<std::int64_t>(bounded(word, static_cast<std::uint64_t>(span))));
}

PlannedRun next_run(const Schedule& schedule, UtcTime now) {
  PlannedRun run;
  run.window_start = floor_hour(now);
  run.window_end = run.window_start + hours(1);
  run.start = run.window_end + jitter_for(schedule, run.window_start);
  return run;
}

std::string to_string(JobStatus s) {
  switch (s) {
    case JobStatus::pending: return "pending";
    case JobStatus::running: return "running";
    case JobStatus::completed: return "completed";
    case JobStatus::completed_with_violations: return "completed_with_violations";
    case JobStatus::failed: return "failed";
  }
  return "failed";
}

JobStatus job_status_from_string(const std::string& s) {
  for (auto st : {JobStatus::pending, JobStatus::running, JobStatus::completed, JobStatus::completed_with_violations,
                  JobStatus::failed})
    if (to_string(st) == s) return st;
  throw ParseError("unknown job status '" + s + "'");
}

void JobRecord::advance(JobStatus next) {
  const auto rank = [](JobStatus s) {
    switch (s) {
      case JobStatus::pending: return 0;
      case JobStatus::running: return 1;
      default: return 2;
    }
  };
  if (rank(next) <= rank(status))
    throw std::logic_error("job status cannot move from " + to_string(status) + " to " + to_string(next));
  status = next;
}

nlohmann::ordered_json to_document(const JobRecord& r) {
  auto opt_time = [](const std::optional<UtcTime>& t) {
    return t ? nlohmann::ordered_json(format_utc(*t, true)) : nlohmann::ordered_json();
  };
  nlohmann::ordered_json doc;
  doc["schedule"] = r.schedule;
  doc["window_start"] = format_utc(r.window_start);
  doc["window_end"] = format_utc(r.window_end);
  doc["scheduled_at"] = format_utc(r.scheduled_at, true);
  doc["started_at"] = opt_time(r.started_at);
  doc["finished_at"] = opt_time(r.finished_at);
  doc["status"] = to_string(r.status);
  doc["violation_count"] = r.violation_count;
  doc["item_count"] = r.item_count;
  doc["steps"] = r.steps;
  doc["note"] = r.note ? nlohmann::ordered_json(*r.note) : nlohmann::ordered_json();
  doc["error"] = r.error ? nlohmann::ordered_json(*r.error) : nlohmann::ordered_json();
  return doc;
}

JobRecord job_record_from_document(const nlohmann::ordered_json& doc) {
  try {
    JobRecord r;
    r.schedule = doc.at("schedule").get<std::string>();
    r.window_start = parse_utc(doc.at("window_start").get<std::string>());
    r.window_end = parse_utc(doc.at("window_end").get<std::string>());
    r.scheduled_at = parse_utc(doc.at("scheduled_at").get<std::string>());
    if (!doc.at("started_at").is_null()) r.started_at = parse_utc(doc.at("started_at").get<std::string>());
    if (!doc.at("finished_at").is_null()) r.finished_at = parse_utc(doc.at("finished_at").get<std::string>());
    r.status = job_status_from_string(doc.at("status").get<std::string>());
    r.violation_count = doc.at("violation_count").get<std::size_t>();
    r.item_count = doc.at("item_count").get<std::uint64_t>();
    r.steps = doc.at("steps").get<std::vector<std::string>>();
    if (doc.contains("note") && !doc.at("note").is_null()) r.note = doc.at("note").get<std::string>();
    if (doc.contains("error") && !doc.at("error").is_null()) r.error = doc.at("error").get<std::string>();
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("job record: ") + e.what());
  }
}

MetricsSink stdout_metrics_sink() {
  return [](const std::string& name, double value, UtcTime window) {
    std::printf("metric %s %s %s\n", name.c_str(), nlohmann::json(value).dump().c_str(), format_utc(window).c_str());
    std::fflush(stdout);
  };
}

fs::path window_output_dir(const Schedule& schedule, UtcTime window_start) {
  return schedule.output_root / partition_path(window_start);
}

JobRecord run_pipeline(const Schedule& schedule, UtcTime window_start, UtcTime now, const MetricsSink& metrics,
                       std::optional<UtcTime> scheduled_at) {
  window_start = floor_hour(window_start);
  const UtcTime window_end = window_start + hours(1);
  if (now < window_end)
    throw ValueError("run_pipeline: window " + format_utc(window_start) + " has not closed at " + format_utc(now));

  JobRecord job;
  job.schedule = schedule.name;
  job.window_start = window_start;
  job.window_end = window_end;
  job.scheduled_at = scheduled_at.value_or(now);
  job.advance(JobStatus::running);
  job.started_at = now;

  try {
    schedule.validate();
    const fs::path out_dir = window_output_dir(schedule, window_start);
    const Baseline baseline = load_baseline(schedule.baseline);
    std::vector<std::string> baseline_columns;
    for (const auto& c : baseline.constraints) baseline_columns.push_back(c.name);

    std::optional<JoinResult> joined;
    if (schedule.labels_root) {
      joined = join_partition(schedule.capture_root, *schedule.labels_root, schedule.joined_root(), window_start);
      job.steps.push_back("join");
    }

    const auto captures = read_capture_partition(schedule.capture_root, window_start);
    if (!captures) job.note = "no capture data for the window";
    const std::vector<CaptureRecord> records = captures ? captures->records : std::vector<CaptureRecord>{};
    job.item_count = records.size();

    const WindowTable window = build_table(records, baseline_columns);
    ProfileOptions profile_options;
    profile_options.seed = schedule.seed;
    const auto profiles = profile_dataset(window.table, profile_options);
    job.steps.push_back("profile");
    write_json_file(out_dir / kStatisticsFile, statistics_document(profiles));

    std::vector<Violation> violations;
    if (!records.empty()) {
      violations = validate_batch(profiles, baseline);
      job.steps.push_back("validate");
    }

    if (joined && !joined->rows.empty()) {
      LabeledBatch batch;
      batch.start_time = window_start;
      batch.end_time = window_end;
      for (const auto& row : joined->rows) {
        const auto [prediction, score] = parse_prediction(row.capture.output);
        batch.rows.push_back({prediction, parse_label(row.label), score});
      }
      BootstrapConfig boot;
      boot.seed = schedule.seed;
      const auto report = quality_metrics(batch, schedule.problem_type, boot);
      std::optional<ConfusionMatrix> confusion;
      if (schedule.problem_type == ProblemType::binary_classification) confusion = confusion_matrix(batch.rows);
      write_json_file(out_dir / kQualityReportFile,
                      quality_report_document({batch.rows.size(), window_start, window_end, now},
                                              schedule.problem_type, report, confusion));
      const fs::path constraints_path = schedule.baseline / kQualityConstraintsFile;
      if (fs::exists(constraints_path)) {
        for (const auto& v : evaluate_quality_constraints(report, constraints_from_document(read_json_file(constraints_path))))
          violations.push_back(quality_violation(v));
      }
      for (const auto& [name, m] : report)
        if (m.value) metrics("quality." + name, *m.value, window_start);
      job.steps.push_back("quality");

      if (schedule.bias) {
        std::vector<FacetedRow> rows;
        for (const auto& row : joined->rows) {
          std::string facet;
          for (const auto& [name, cell] : input_cells(row.capture.input, baseline_columns))
            if (name == schedule.bias->facet_column) facet = cell;
          const double label = parse_label(row.label);
          const double prediction = parse_prediction(row.capture.output).first;
          if ((label != 0.0 && label != 1.0) || (prediction != 0.0 && prediction != 1.0))
            throw ValueError("bias check: labels and predictions must be 0 or 1");
          rows.push_back({static_cast<int>(label), static_cast<int>(prediction),
                          facet == schedule.bias->advantaged_value ? Facet::advantaged : Facet::disadvantaged});
        }
        BiasAlarmConfig cfg;
        cfg.range = schedule.bias->range;
        cfg.seed = schedule.seed;
        cfg.sample_cap = rows.size();
        const auto decision = bias_alarm(rows, dpl, cfg);
        metrics("bias.dpl", decision.metric_value, window_start);
        if (decision.alarm) {
          violations.push_back({"bias_drift_check", schedule.bias->facet_column,
                                 "DPL outside the acceptable range after allowing one bootstrap standard deviation.",
                                 {{"value", decision.metric_value}, {"standard_deviation", decision.bootstrap_stddev}},
                                 {{"low", cfg.range.low}, {"high", cfg.range.high}}});
        }
        job.steps.push_back("bias");
      }
    }

    if (schedule.attribution_baseline) {
      const fs::path observation_path = schedule.capture_root / partition_path(window_start) / kAttributionObservationFile;
      if (fs::exists(observation_path)) {
        const auto base = attribution_baseline_from_document(read_json_file(*schedule.attribution_baseline));
        const auto obs = attribution_observation_from_document(read_json_file(observation_path));
        const auto result = attribution_drift_check(base, obs, schedule.ndcg_threshold);
        metrics("attribution.ndcg", result.ndcg, window_start);
        if (result.alert) {
          violations.push_back({"feature_attribution_drift_check", std::nullopt,
                                "NDCG of the feature attribution ranking dropped below the threshold.", result.ndcg,
                                schedule.ndcg_threshold});
        }
        job.steps.push_back("attribution");
      }
    }

    write_json_file(out_dir / kViolationsFile, violations_document(violations));
    job.violation_count = violations.size();
    metrics("item_count", static_cast<double>(job.item_count), window_start);
    metrics("violation_count", static_cast<double>(job.violation_count), window_start);
    job.advance(violations.empty() ? JobStatus::completed : JobStatus::completed_with_violations);
  } catch (const std::exception& e) {
    job.error = e.what();
    job.advance(JobStatus::failed);
  }
  job.finished_at = now;
  return job;
}

JobStore::JobStore(fs::path path) : path_(std::move(path)) {}

void JobStore::record(const JobRecord& record) {
  if (path_.has_parent_path()) fs::create_directories(path_.parent_path());
  std::ofstream f(path_, std::ios::binary | std::ios::app);
  if (!f) throw std::runtime_error("cannot append to " + path_.string());
  f << to_document(record).dump() << '\n';
}

std::vector<JobRecord> JobStore::history() const {
  std::vector<JobRecord> out;
  std::ifstream f(path_, std::ios::binary);
  if (!f) return out;
  std::map<std::pair<std::string, std::int64_t>, std::size_t> index;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(f, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::ordered_json doc;
    try {
      doc = nlohmann::ordered_json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(path_.string() + " line " + std::to_string(line_no) + ": " + e.what());
    }
    auto rec = job_record_from_document(doc);
    const auto key = std::make_pair(rec.schedule, epoch_millis(rec.window_start));
    if (auto it = index.find(key); it != index.end()) {
      out[it->second] = std::move(rec);
    } else {
      index.emplace(key, out.size());
      out.push_back(std::move(rec));
    }
  }
  std::stable_sort(out.begin(), out.end(), [](const JobRecord& a, const JobRecord& b) {
    if (a.window_start != b.window_start) return a.window_start > b.window_start;
    return a.schedule < b.schedule;
  });
  return out;
}

Scheduler::Scheduler(Schedule schedule, JobStore& store, MetricsSink metrics, Clock clock, Sleeper sleeper)
    : schedule_(std::move(schedule)), store_(store), metrics_(std::move(metrics)), clock_(std::move(clock)),
      sleeper_(std::move(sleeper)) {
  schedule_.validate();
  if (!sleeper_) {
    sleeper_ = [](UtcTime until) { std::this_thread::sleep_until(until); };
  }
}

JobRecord Scheduler::run_once() {
  const UtcTime now = clock_();
  const UtcTime window = floor_hour(now) - hours(1);
  auto record = run_pipeline(schedule_, window, now, metrics_, now);
  store_.record(record);
  return record;
}

void Scheduler::run_loop(std::size_t iterations) {
  for (std::size_t i = 0; iterations == 0 || i < iterations; ++i) {
    const PlannedRun plan = next_run(schedule_, clock_());
    UtcTime now = clock_();
    while (now < plan.start) {
      sleeper_(plan.start);
      now = clock_();
    }
    auto record = run_pipeline(schedule_, plan.window_start, now, metrics_, plan.start);
    store_.record(record);
  }
}

}  // namespace modelmon
