#include "modelmon/adaptive_sim.hpp"

#include <array>
#include <charconv>
#include <cmath>
#include <deque>
#include <map>
#include <sstream>

#include "modelmon/errors.hpp"
#include "modelmon/rng.hpp"

namespace modelmon {

namespace {

std::string format_double(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

}  // namespace

GenerativeModel drift_step(GenerativeModel model, std::mt19937_64& rng, DriftMode mode) {
  if (mode == DriftMode::mean_only) {
    model.a += 1.0;
    model.b += 1.0;
    return model;
  }
  std::normal_distribution<double> noise(1.0, 1.0);
  model.a += noise(rng);
  model.b += noise(rng);
  return model;
}

std::string to_string(Technique t) { return t == Technique::adaptive ? "adaptive" : "nonadaptive"; }

void Policy::validate() const {
  if (kind == Technique::adaptive && !(threshold > 0.0)) throw ConfigError("policy: threshold must be positive");
  if (kind == Technique::nonadaptive && interval < 1) throw ConfigError("policy: interval must be at least 1");
}

RoundResult simulate(const Policy& policy, const SimulationOptions& options, std::uint64_t seed) {
  policy.validate();
  if (options.horizon < 1) throw ConfigError("simulate: horizon must be at least 1");

  std::mt19937_64 x_rng(mix_seed(seed, {1}));
  std::mt19937_64 drift_rng(mix_seed(seed, {2}));
  std::normal_distribution<double> input(0.0, 1.0);

  GenerativeModel truth = options.initial;
  GenerativeModel deployed = truth;
  std::deque<double> trailing;  // squared errors
  double trailing_sum = 0.0;
  double total_sq = 0.0;
  RoundResult result;
  result.technique = policy.kind;
  result.knob = policy.kind == Technique::adaptive ? policy.threshold : static_cast<double>(policy.interval);

  for (std::size_t count = 1; count <= options.horizon; ++count) {
    const double x = input(x_rng);
    const double err = (deployed.a * x + deployed.b) - (truth.a * x + truth.b);
    const double sq = err * err;
    total_sq += sq;

    bool retrain = false;
    if (policy.kind == Technique::nonadaptive) {
      retrain = count % policy.interval == 0;
    } else {
      trailing.push_back(sq);
      trailing_sum += sq;
      if (trailing.size() > kTrailingWindow) {
        trailing_sum -= trailing.front();
        trailing.pop_front();
      }
      if (trailing.size() == kTrailingWindow) {
        const double rmse = std::sqrt(std::max(0.0, trailing_sum) / static_cast<double>(kTrailingWindow));
        retrain = rmse > policy.threshold;
      }
    }
    if (retrain) {
      deployed = truth;
      ++result.cost;
      trailing.clear();
      trailing_sum = 0.0;
    }
    if (count % kDriftPeriod == 0) truth = drift_step(truth, drift_rng, options.drift);
  }
  result.rmse = std::sqrt(total_sq / static_cast<double>(options.horizon));
  return result;
}

std::vector<RoundResult> experiment(const ExperimentOptions& options) {
  if (options.rounds == 0) throw ConfigError("experiment: rounds must be at least 1");
  if (options.knobs.intervals.empty()) throw ConfigError("experiment: interval range is empty");
  if (!(options.knobs.threshold_low > 0.0 && options.knobs.threshold_low <= options.knobs.threshold_high))
    throw ConfigError("experiment: threshold range must satisfy 0 < low <= high");

  std::vector<RoundResult> out;
  out.reserve(options.rounds);
  const double log_low = std::log(options.knobs.threshold_low);
  const double log_high = std::log(options.knobs.threshold_high);
  for (std::size_t r = 0; r < options.rounds; ++r) {
    const std::uint64_t round_seed = mix_seed(options.master_seed, {r});
    const std::uint64_t choice = mix_seed(round_seed, {0x706f6c});
    Policy policy;
    policy.kind = (choice & 1U) != 0 ? Technique::adaptive : Technique::nonadaptive;
    const std::uint64_t knob = mix_seed(round_seed, {0x6b6e6f62});
    if (policy.kind == Technique::adaptive) {
      policy.threshold = std::exp(log_low + (log_high - log_low) * unit_interval(knob));
    } else {
      policy.interval = options.knobs.intervals[bounded(knob, options.knobs.intervals.size())];
    }
    SimulationOptions sim;
    sim.horizon = options.horizon;
    out.push_back(simulate(policy, sim, round_seed));
  }
  return out;
}

std::vector<SummaryRow> summarize(const std::vector<RoundResult>& results) {
  std::map<std::pair<int, std::uint64_t>, std::pair<double, std::size_t>> groups;
  for (const auto& r : results) {
    auto& g = groups[{r.technique == Technique::adaptive ? 0 : 1, r.cost}];
    g.first += r.rmse;
    ++g.second;
  }
  std::vector<SummaryRow> out;
  for (const auto& [key, g] : groups)
    out.push_back({key.first == 0 ? Technique::adaptive : Technique::nonadaptive, key.second,
                   g.first / static_cast<double>(g.second), g.second});
  return out;
}

std::vector<CostComparison> compare_at_equal_cost(const std::vector<RoundResult>& results, std::size_t min_points) {
  std::map<std::uint64_t, std::array<SummaryRow, 2>> levels;
  for (const auto& row : summarize(results)) levels[row.cost][row.technique == Technique::adaptive ? 0 : 1] = row;
  std::vector<CostComparison> out;
  for (const auto& [cost, pair] : levels) {
    const auto& [adaptive, nonadaptive] = pair;
    if (adaptive.count < min_points || nonadaptive.count < min_points) continue;
    out.push_back({cost, nonadaptive.mean_rmse, nonadaptive.count, adaptive.mean_rmse, adaptive.count});
  }
  return out;
}

std::vector<CostComparison> compare_in_cost_band(const std::vector<RoundResult>& results, double band,
                                                 std::size_t min_nonadaptive, std::size_t min_adaptive) {
  if (!(band >= 1.0)) throw ConfigError("compare_in_cost_band: band must be at least 1");
  std::vector<CostComparison> out;
  for (const auto& row : summarize(results)) {
    if (row.technique != Technique::nonadaptive || row.count < min_nonadaptive) continue;
    const double lo = static_cast<double>(row.cost) / band;
    const double hi = static_cast<double>(row.cost) * band;
    double sum = 0.0;
    std::size_t count = 0;
    for (const auto& r : results) {
      const auto c = static_cast<double>(r.cost);
      if (r.technique == Technique::adaptive && c >= lo && c <= hi) {
        sum += r.rmse;
        ++count;
      }
    }
    if (count < min_adaptive) continue;
    out.push_back({row.cost, row.mean_rmse, row.count, sum / static_cast<double>(count), count});
  }
  return out;
}

std::string triplets_csv(const std::vector<RoundResult>& results) {
  std::ostringstream os;
  os << "technique,cost,rmse\n";
  for (const auto& r : results) os << to_string(r.technique) << ',' << r.cost << ',' << format_double(r.rmse) << '\n';
  return os.str();
}

std::string summary_csv(const std::vector<SummaryRow>& rows) {
  std::ostringstream os;
  os << "technique,cost,mean_rmse,count\n";
  for (const auto& r : rows)
    os << to_string(r.technique) << ',' << r.cost << ',' << format_double(r.mean_rmse) << ',' << r.count << '\n';
  return os.str();
}

}  // namespace modelmon
