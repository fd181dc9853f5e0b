#include "cli.hpp"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "modelmon/adaptive_sim.hpp"
#include "modelmon/attribution.hpp"
#include "modelmon/baseline.hpp"
#include "modelmon/bias.hpp"
#include "modelmon/capture.hpp"
#include "modelmon/csv.hpp"
#include "modelmon/errors.hpp"
#include "modelmon/quality.hpp"
#include "modelmon/report_json.hpp"
#include "modelmon/scheduler.hpp"

namespace modelmon::cli {

namespace fs = std::filesystem;

namespace {

constexpr const char* kHelpFooter =
    "Files: baselines are directories holding statistics.json, constraints.json and optionally\n"
    "quality_constraints.json; captures are JSON lines {event_id,timestamp,input,output} under\n"
    "<capture_root>/YYYY/MM/DD/HH/<epoch-millis>-<seq>.jsonl; labels are JSON lines {event_id,label}\n"
    "with the same layout; window reports land in <out>/statistics.json, model_quality.json and\n"
    "constraint_violations.json. Exit status: 0 clean, 2 violations or alerts, 1 error, 64 usage.";

void log(const std::string& message) { std::cerr << "[modelmon] " << message << '\n'; }

std::string read_text(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ParseError("cannot read " + path.string());
  std::stringstream buf;
  buf << f.rdbuf();
  return buf.str();
}

void emit(const std::string& text, const std::string& out_path) {
  if (out_path.empty()) {
    std::cout << text;
    std::cout.flush();
  } else {
    write_text_file(out_path, text);
    log("wrote " + out_path);
  }
}

std::vector<std::size_t> parse_sizes(const std::string& text) {
  std::vector<std::size_t> out;
  for (const auto& field : parse_csv_line(text)) {
    try {
      std::size_t used = 0;
      const auto v = std::stoull(field, &used);
      if (used != field.size()) throw std::invalid_argument(field);
      out.push_back(static_cast<std::size_t>(v));
    } catch (const std::exception&) {
      throw ConfigError("not a list of sizes: '" + text + "'");
    }
  }
  return out;
}

struct LabeledColumns {
  std::string prediction = "prediction";
  std::string label = "label";
  std::string score = "score";
};

LabeledBatch read_labeled_csv(const fs::path& path, const LabeledColumns& cols) {
  const auto table = parse_csv(read_text(path));
  auto index_of = [&](const std::string& name) -> std::optional<std::size_t> {
    for (std::size_t i = 0; i < table.header.size(); ++i)
      if (table.header[i] == name) return i;
    return std::nullopt;
  };
  const auto p = index_of(cols.prediction);
  const auto l = index_of(cols.label);
  if (!p || !l) throw ConfigError(path.string() + ": needs columns '" + cols.prediction + "' and '" + cols.label + "'");
  const auto s = index_of(cols.score);
  auto number = [&](const std::string& cell, std::size_t row) {
    try {
      std::size_t used = 0;
      const double v = std::stod(cell, &used);
      if (used != cell.size()) throw std::invalid_argument(cell);
      return v;
    } catch (const std::exception&) {
      throw ParseError(path.string() + " row " + std::to_string(row + 1) + ": '" + cell + "' is not a number");
    }
  };
  LabeledBatch batch;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    LabeledRow lr{number(row[*p], r), number(row[*l], r), std::nullopt};
    if (s && !is_null_token(row[*s])) lr.score = number(row[*s], r);
    batch.rows.push_back(lr);
  }
  return batch;
}

struct BootstrapFlags {
  std::size_t n_boot = 5;
  std::size_t sample_cap = 200;
  double resample_frac = 0.8;
  std::uint64_t seed = 0;
  [[nodiscard]] BootstrapConfig config() const { return {n_boot, resample_frac, sample_cap, seed}; }
};

void add_bootstrap_flags(CLI::App* app, BootstrapFlags& f) {
  app->add_option("--n-boot", f.n_boot, "Bootstrap iterations")->capture_default_str();
  app->add_option("--sample-cap", f.sample_cap, "Rows entering the bootstrap")->capture_default_str();
  app->add_option("--resample-frac", f.resample_frac, "Fraction drawn per replicate")->capture_default_str();
  app->add_option("--seed", f.seed, "Seed")->capture_default_str();
}

void add_labeled_flags(CLI::App* app, LabeledColumns& c) {
  app->add_option("--prediction-column", c.prediction, "Prediction column in --labeled")->capture_default_str();
  app->add_option("--label-column", c.label, "Label column in --labeled")->capture_default_str();
  app->add_option("--score-column", c.score, "Optional score column in --labeled (AUC)")->capture_default_str();
}

UtcTime time_option(const std::string& text, UtcTime fallback) { return text.empty() ? fallback : parse_utc(text); }

// ---------------------------------------------------------------------------

struct SuggestBaselineArgs {
  std::string dataset;
  std::string out;
  std::string labeled;
  std::string problem_type = "regression";
  double epsilon = 0.1;
  double alpha = 0.05;
  double beta = 1.0;
  LabeledColumns columns;
  BootstrapFlags boot;
};

int run_suggest_baseline(const SuggestBaselineArgs& a) {
  ProfileOptions options;
  options.seed = a.boot.seed;
  const auto profiles = profile_csv(read_text(a.dataset), options);
  const auto baseline = suggest_baseline(profiles, {a.epsilon, a.alpha});
  save_baseline(baseline, a.out);
  log("baseline with " + std::to_string(profiles.size()) + " columns written to " + a.out);
  if (!a.labeled.empty()) {
    const auto problem = problem_type_from_string(a.problem_type);
    const auto batch = read_labeled_csv(a.labeled, a.columns);
    const auto report = quality_metrics(batch, problem, a.boot.config(), a.beta);
    const auto now = utc_now();
    write_json_file(fs::path(a.out) / "model_quality.json",
                    quality_report_document({batch.rows.size(), now, now, now}, problem, report));
    write_json_file(fs::path(a.out) / "quality_constraints.json",
                    constraints_document(suggest_quality_constraints(report, problem)));
    log("quality constraints written to " + (fs::path(a.out) / "quality_constraints.json").string());
  }
  return kClean;
}

struct AnalyzeArgs {
  std::string config;
  std::string window;
  std::string baseline;
  std::string dataset;
  std::string labeled;
  std::string quality_constraints;
  std::string out;
  std::string problem_type = "regression";
  std::string window_start;
  std::string window_end;
  std::string evaluation_time;
  double beta = 1.0;
  double completeness_slack = 0.0;
  LabeledColumns columns;
  BootstrapFlags boot;
};

int status_exit(const JobRecord& job) {
  if (job.status == JobStatus::failed) {
    log("job failed: " + job.error.value_or("unknown error"));
    return kError;
  }
  return job.status == JobStatus::completed_with_violations ? kViolations : kClean;
}

int run_analyze(const AnalyzeArgs& a) {
  if (!a.config.empty()) {
    if (a.window.empty()) throw ConfigError("analyze --config needs --window");
    const auto schedule = load_schedule(a.config);
    const auto job = run_pipeline(schedule, parse_utc(a.window), utc_now(), stdout_metrics_sink());
    log("window " + format_utc(job.window_start) + ": " + to_string(job.status) + ", " +
        std::to_string(job.violation_count) + " violation(s)");
    return status_exit(job);
  }
  if (a.out.empty()) throw ConfigError("analyze needs --out (or --config and --window)");
  if (a.dataset.empty() && a.labeled.empty()) throw ConfigError("analyze needs --dataset and/or --labeled");

  const UtcTime now = utc_now();
  const UtcTime start = time_option(a.window_start, floor_hour(now) - std::chrono::hours(1));
  const UtcTime end = time_option(a.window_end, start + std::chrono::hours(1));
  const UtcTime evaluated = time_option(a.evaluation_time, now);
  if (end < start) throw ConfigError("analyze: --window-end precedes --window-start");

  std::vector<Violation> violations;
  if (!a.dataset.empty()) {
    if (a.baseline.empty()) throw ConfigError("analyze --dataset needs --baseline");
    const Baseline baseline = load_baseline(a.baseline);
    ProfileOptions options;
    options.seed = a.boot.seed;
    const auto profiles = profile_csv(read_text(a.dataset), options);
    write_json_file(fs::path(a.out) / kStatisticsFile, statistics_document(profiles));
    violations = validate_batch(profiles, baseline, {a.completeness_slack});
  }
  if (!a.labeled.empty()) {
    const auto problem = problem_type_from_string(a.problem_type);
    LabeledBatch batch = read_labeled_csv(a.labeled, a.columns);
    batch.start_time = start;
    batch.end_time = end;
    const auto report = quality_metrics(batch, problem, a.boot.config(), a.beta);
    std::optional<ConfusionMatrix> confusion;
    if (problem == ProblemType::binary_classification) confusion = confusion_matrix(batch.rows);
    write_json_file(fs::path(a.out) / "model_quality.json",
                    quality_report_document({batch.rows.size(), start, end, evaluated}, problem, report, confusion));
    fs::path constraints_path = a.quality_constraints;
    if (constraints_path.empty() && !a.baseline.empty()) constraints_path = fs::path(a.baseline) / "quality_constraints.json";
    if (!constraints_path.empty() && fs::exists(constraints_path)) {
      for (const auto& v : evaluate_quality_constraints(report, constraints_from_document(read_json_file(constraints_path)))) {
        Violation out;
        out.check_name = "metric_threshold_check";
        out.column = v.metric;
        out.description = v.missing ? "Metric '" + v.metric + "' is missing from the quality report."
                                    : "Metric '" + v.metric + "' breached its " + to_string(v.comparison_operator) +
                                          " threshold.";
        out.observed = v.value ? nlohmann::ordered_json(*v.value) : nlohmann::ordered_json();
        out.expected = {{"threshold", v.threshold}, {"comparison_operator", to_string(v.comparison_operator)}};
        violations.push_back(std::move(out));
      }
    }
  }
  write_json_file(fs::path(a.out) / kViolationsFile, violations_document(violations));
  log(std::to_string(violations.size()) + " violation(s); reports in " + a.out);
  return violations.empty() ? kClean : kViolations;
}

struct CaptureArgs {
  std::string input;
  std::string capture_root;
  double sampling_percentage = 100.0;
  std::size_t max_bytes = 1U << 20;
  double max_age_seconds = 60.0;
  std::uint64_t seed = 0;
};

int run_capture_ingest(const CaptureArgs& a) {
  FlushPolicy policy;
  policy.max_bytes = a.max_bytes;
  policy.max_age = std::chrono::milliseconds(static_cast<std::int64_t>(a.max_age_seconds * 1000.0));
  CaptureSampler sampler(a.sampling_percentage, a.seed);
  std::ifstream in(a.input, std::ios::binary);
  if (!in) throw ParseError("cannot read " + a.input);

  std::size_t read = 0;
  std::size_t sampled = 0;
  std::size_t malformed = 0;
  std::uint64_t rejected = 0;
  std::uint64_t flushed = 0;
  {
    CaptureDaemon daemon(policy, directory_sink(a.capture_root));
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      ++read;
      CaptureRecord record;
      try {
        const auto j = nlohmann::json::parse(line);
        record.event_id = j.at("event_id").get<std::string>();
        record.timestamp = j.contains("timestamp") ? parse_utc(j.at("timestamp").get<std::string>()) : utc_now();
        const auto& input = j.at("input");
        const auto& output = j.at("output");
        record.input = input.is_string() ? input.get<std::string>() : input.dump();
        record.output = output.is_string() ? output.get<std::string>() : output.dump();
      } catch (const std::exception& e) {
        ++malformed;
        log("skipping line " + std::to_string(read) + ": " + e.what());
        continue;
      }
      if (!sampler.next()) continue;
      ++sampled;
      daemon.append(record);
    }
    daemon.stop();
    rejected = daemon.rejected();
    flushed = daemon.flushed_records();
    if (daemon.failed_flushes() > 0) throw std::runtime_error("capture: some flushes could not be written");
  }
  const nlohmann::ordered_json summary{{"read", read},         {"sampled", sampled}, {"malformed", malformed},
                                       {"rejected", rejected}, {"written", flushed}};
  std::cout << summary.dump() << '\n';
  return kClean;
}

struct JoinArgs {
  std::string capture_root;
  std::string labels_root;
  std::string joined_root;
  std::string window;
  std::size_t hours = 1;
};

int run_join(const JoinArgs& a) {
  const UtcTime first = floor_hour(parse_utc(a.window));
  for (std::size_t h = 0; h < a.hours; ++h) {
    const UtcTime hour = first + std::chrono::hours(h);
    const auto r = join_partition(a.capture_root, a.labels_root, a.joined_root, hour);
    const nlohmann::ordered_json counts{{"window", format_utc(hour)},
                                        {"captured", r.counts.captured},
                                        {"labeled", r.counts.labeled},
                                        {"joined", r.counts.joined},
                                        {"unlabeled", r.counts.unlabeled},
                                        {"orphan_labels", r.counts.orphan_labels}};
    std::cout << counts.dump() << '\n';
  }
  return kClean;
}

struct ScheduleArgs {
  std::string config;
  std::string store;
  bool once = false;
  std::size_t iterations = 0;
};

int run_schedule(const ScheduleArgs& a) {
  const Schedule schedule = load_schedule(a.config);
  log("resolved schedule: " + to_document(schedule).dump());
  JobStore store(a.store.empty() ? schedule.output_root / "job_history.jsonl" : fs::path(a.store));
  Scheduler scheduler(schedule, store, stdout_metrics_sink());
  if (a.once) {
    const auto job = scheduler.run_once();
    log("window " + format_utc(job.window_start) + ": " + to_string(job.status));
    return status_exit(job);
  }
  scheduler.run_loop(a.iterations);
  return kClean;
}

struct BiasArgs {
  std::string out;
  std::string sizes = "20,50,100,200,500,1000,2000,5000";
  std::size_t repeats = 100;
  std::size_t n_boot = 5;
  double resample_frac = 0.8;
  std::uint64_t seed = 0;
};

int run_bias_case_study(const BiasArgs& a) {
  const SyntheticPopulation population;
  const double b = population.true_dpl();
  log("synthetic population DPL " + nlohmann::json(b).dump());
  const auto cells = bias_case_study(population.build(a.seed), standard_case_study_configs(b), parse_sizes(a.sizes),
                                     {a.repeats, a.n_boot, a.resample_frac, a.seed});
  emit(case_study_csv(cells), a.out);
  return kClean;
}

struct AdaptiveArgs {
  std::size_t rounds = 400;
  std::size_t horizon = kDefaultHorizon;
  std::uint64_t seed = 0;
  std::string out;
};

int run_simulate_adaptive(const AdaptiveArgs& a) {
  ExperimentOptions options;
  options.rounds = a.rounds;
  options.horizon = a.horizon;
  options.master_seed = a.seed;
  const auto results = experiment(options);
  const auto summary = summarize(results);
  const auto equal = compare_at_equal_cost(results);
  log(std::to_string(equal.size()) + " cost level(s) with >= 10 rounds of each technique");
  for (const auto& c : compare_in_cost_band(results)) {
    log("cost " + std::to_string(c.cost) + ": nonadaptive " + nlohmann::json(c.nonadaptive_mean).dump() + " (" +
        std::to_string(c.nonadaptive_count) + "), adaptive within 1.25x " + nlohmann::json(c.adaptive_mean).dump() +
        " (" + std::to_string(c.adaptive_count) + ")");
  }
  if (a.out.empty()) {
    std::cout << summary_csv(summary);
    return kClean;
  }
  write_text_file(fs::path(a.out) / "triplets.csv", triplets_csv(results));
  write_text_file(fs::path(a.out) / "summary.csv", summary_csv(summary));
  log("wrote triplets.csv and summary.csv to " + a.out);
  return kClean;
}

struct NdcgArgs {
  std::string baseline;
  std::string observation;
  double threshold = kDefaultNdcgThreshold;
};

int run_ndcg_check(const NdcgArgs& a) {
  const auto base = attribution_baseline_from_document(read_json_file(a.baseline));
  const auto obs = attribution_observation_from_document(read_json_file(a.observation));
  const auto r = attribution_drift_check(base, obs, a.threshold);
  std::cout << nlohmann::ordered_json{{"ndcg", r.ndcg}, {"threshold", a.threshold}, {"alert", r.alert}}.dump() << '\n';
  return r.alert ? kViolations : kClean;
}

}  // namespace

int dispatch(int argc, const char* const* argv) {
  CLI::App app{"Model monitoring: baselines, capture, drift, quality, bias and attribution checks", "modelmon"};
  app.footer(kHelpFooter);
  app.require_subcommand(1);
  app.set_config("--settings", "", "INI/TOML file with flag values; command-line flags win");

  SuggestBaselineArgs suggest;
  auto* s = app.add_subcommand("suggest-baseline", "Profile a reference CSV and write a baseline directory");
  s->add_option("--dataset", suggest.dataset, "Reference CSV with header")->required()->check(CLI::ExistingFile);
  s->add_option("--out", suggest.out, "Baseline directory")->required();
  s->add_option("--labeled", suggest.labeled, "Optional CSV with predictions and labels for quality constraints");
  s->add_option("--problem-type", suggest.problem_type, "regression | binary_classification")->capture_default_str();
  s->add_option("--epsilon", suggest.epsilon, "Drift tolerance in CDF units")->capture_default_str();
  s->add_option("--alpha", suggest.alpha, "Drift test significance")->capture_default_str();
  s->add_option("--beta", suggest.beta, "Extra F-beta score")->capture_default_str();
  add_labeled_flags(s, suggest.columns);
  add_bootstrap_flags(s, suggest.boot);

  CaptureArgs capture;
  auto* c = app.add_subcommand("capture-ingest", "Sample request/response JSON lines into hourly capture files");
  c->add_option("--input", capture.input, "JSON lines {event_id,timestamp,input,output}")->required()->check(CLI::ExistingFile);
  c->add_option("--capture-root", capture.capture_root, "Capture directory")->required();
  c->add_option("--sampling-percentage", capture.sampling_percentage, "Percent of requests kept")
      ->capture_default_str()
      ->check(CLI::Range(0.0, 100.0));
  c->add_option("--max-bytes", capture.max_bytes, "Flush threshold in bytes")->capture_default_str();
  c->add_option("--max-age-seconds", capture.max_age_seconds, "Flush threshold in seconds")->capture_default_str();
  c->add_option("--seed", capture.seed, "Sampling seed")->capture_default_str();

  JoinArgs join;
  auto* j = app.add_subcommand("join", "Join captures with ground-truth labels for hourly windows");
  j->add_option("--capture-root", join.capture_root, "Capture directory")->required();
  j->add_option("--labels-root", join.labels_root, "Label directory")->required();
  j->add_option("--joined-root", join.joined_root, "Output directory")->required();
  j->add_option("--window", join.window, "Any instant inside the first hour (RFC 3339)")->required();
  j->add_option("--hours", join.hours, "Number of consecutive hours")->capture_default_str();

  AnalyzeArgs analyze;
  auto* a = app.add_subcommand("analyze", "Analyze one window against a baseline");
  a->add_option("--config", analyze.config, "Schedule config (JSON); runs the full pipeline for --window");
  a->add_option("--window", analyze.window, "Window start for --config (RFC 3339)");
  a->add_option("--baseline", analyze.baseline, "Baseline directory");
  a->add_option("--dataset", analyze.dataset, "Window CSV with header");
  a->add_option("--labeled", analyze.labeled, "CSV with predictions and labels");
  a->add_option("--quality-constraints", analyze.quality_constraints, "Quality constraints JSON");
  a->add_option("--out", analyze.out, "Output directory");
  a->add_option("--problem-type", analyze.problem_type, "regression | binary_classification")->capture_default_str();
  a->add_option("--window-start", analyze.window_start, "Report window start (RFC 3339)");
  a->add_option("--window-end", analyze.window_end, "Report window end (RFC 3339)");
  a->add_option("--evaluation-time", analyze.evaluation_time, "Report evaluation time (RFC 3339), default now");
  a->add_option("--beta", analyze.beta, "Extra F-beta score")->capture_default_str();
  a->add_option("--completeness-slack", analyze.completeness_slack, "Allowed completeness shortfall")->capture_default_str();
  add_labeled_flags(a, analyze.columns);
  add_bootstrap_flags(a, analyze.boot);

  ScheduleArgs schedule;
  auto* r = app.add_subcommand("schedule-run", "Run an hourly schedule");
  r->add_option("--config", schedule.config, "Schedule config (JSON)")->required()->check(CLI::ExistingFile);
  r->add_option("--store", schedule.store, "Job history file (default <output_root>/job_history.jsonl)");
  r->add_flag("--once", schedule.once, "Run the most recently closed window now and exit");
  r->add_option("--iterations", schedule.iterations, "Loop iterations, 0 = forever")->capture_default_str();

  BiasArgs bias;
  auto* b = app.add_subcommand("bias-case-study", "Alarm rates of the bootstrap bias alarm on a synthetic population");
  b->add_option("--out", bias.out, "CSV path (stdout when omitted)");
  b->add_option("--sizes", bias.sizes, "Comma-separated sample sizes")->capture_default_str();
  b->add_option("--repeats", bias.repeats, "Runs per cell")->capture_default_str();
  b->add_option("--n-boot", bias.n_boot, "Bootstrap iterations")->capture_default_str();
  b->add_option("--resample-frac", bias.resample_frac, "Fraction drawn per replicate")->capture_default_str();
  b->add_option("--seed", bias.seed, "Seed")->capture_default_str();

  AdaptiveArgs adaptive;
  auto* m = app.add_subcommand("simulate-adaptive", "Adaptive vs nonadaptive retraining experiment");
  m->add_option("--rounds", adaptive.rounds, "Rounds")->capture_default_str()->check(CLI::PositiveNumber);
  m->add_option("--horizon", adaptive.horizon, "Examples per round")->capture_default_str()->check(CLI::PositiveNumber);
  m->add_option("--seed", adaptive.seed, "Master seed")->capture_default_str();
  m->add_option("--out", adaptive.out, "Directory for triplets.csv and summary.csv (summary to stdout when omitted)");

  NdcgArgs ndcg;
  auto* n = app.add_subcommand("ndcg-check", "Feature attribution drift via NDCG");
  n->add_option("--baseline", ndcg.baseline, "{\"scores\":{feature:score}}")->required()->check(CLI::ExistingFile);
  n->add_option("--observation", ndcg.observation, "{\"ranking\":[...]} or {\"scores\":{...}}")
      ->required()
      ->check(CLI::ExistingFile);
  n->add_option("--threshold", ndcg.threshold, "Alert when NDCG drops below")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n\n" << app.help();
    return kUsage;
  }

  auto* sub = app.get_subcommands().front();
  std::cerr << "[modelmon] resolved config for " << sub->get_name() << ":\n" << sub->config_to_str(true, false);

  try {
    if (sub == s) return run_suggest_baseline(suggest);
    if (sub == c) return run_capture_ingest(capture);
    if (sub == j) return run_join(join);
    if (sub == a) return run_analyze(analyze);
    if (sub == r) return run_schedule(schedule);
    if (sub == b) return run_bias_case_study(bias);
    if (sub == m) return run_simulate_adaptive(adaptive);
    if (sub == n) return run_ndcg_check(ndcg);
  } catch (const ConfigError& e) {
    std::cerr << "usage error: " << e.what() << "\n\n" << sub->help();
    return kUsage;
  } catch (const std::exception& e) {
    log(std::string("error: ") + e.what());
    return kError;
  }
  return kUsage;
}

int dispatch(const std::vector<std::string>& args) {
  std::vector<const char*> argv;
  argv.reserve(args.size() + 1);
  argv.push_back("modelmon");
  for (const auto& s : args) argv.push_back(s.c_str());
  return dispatch(static_cast<int>(argv.size()), argv.data());
}

}  // namespace modelmon::cli
