#include "modelmon/bias.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "modelmon/errors.hpp"
#include "modelmon/rng.hpp"

namespace modelmon {

namespace {

struct GroupTally {
  std::size_t size = 0;
  std::size_t hits = 0;
  [[nodiscard]] double rate() const { return static_cast<double>(hits) / static_cast<double>(size); }
};

template <typename Hit>
double group_difference(std::span<const FacetedRow> rows, const char* name, Hit hit) {
  GroupTally adv;
  GroupTally dis;
  for (const auto& r : rows) {
    auto& g = r.facet == Facet::advantaged ? adv : dis;
    ++g.size;
    if (hit(r)) ++g.hits;
  }
  if (adv.size == 0 || dis.size == 0) throw InsufficientDataError(std::string(name) + ": empty facet group");
  return adv.rate() - dis.rate();
}

std::string format_double(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

}  // namespace

double dpl(std::span<const FacetedRow> rows) {
  return group_difference(rows, "dpl", [](const FacetedRow& r) { return r.label == 1; });
}

double accuracy_difference(std::span<const FacetedRow> rows) {
  return group_difference(rows, "accuracy_difference", [](const FacetedRow& r) {
    if (!r.prediction) throw ValueError("accuracy_difference: row without prediction");
    return *r.prediction == r.label;
  });
}

void BiasAlarmConfig::validate() const {
  if (!(range.low <= range.high)) throw ConfigError("bias alarm: range low must not exceed high");
  bootstrap().validate();
}

BootstrapConfig BiasAlarmConfig::bootstrap() const { return {n_boot, resample_frac, sample_cap, seed}; }

bool alarm_rule(double value, double stddev, const AcceptableRange& range) {
  return value > range.high + stddev || value < range.low - stddev;
}

AlarmDecision bias_alarm(std::span<const FacetedRow> rows, const BiasMetric& metric, const BiasAlarmConfig& cfg) {
  cfg.validate();
  const auto used = rows.first(std::min(rows.size(), cfg.sample_cap));
  AlarmDecision d;
  d.metric_value = metric(used);
  d.bootstrap_stddev = bootstrap_stddev(used, metric, cfg.bootstrap()).value_or(0.0);
  d.alarm = alarm_rule(d.metric_value, d.bootstrap_stddev, cfg.range);
  return d;
}

double SyntheticPopulation::true_dpl() const {
  return static_cast<double>(advantaged_positive) / static_cast<double>(advantaged) -
         static_cast<double>(disadvantaged_positive) / static_cast<double>(disadvantaged);
}

FacetedBatch SyntheticPopulation::build(std::uint64_t seed) const {
  if (advantaged_positive > advantaged || disadvantaged_positive > disadvantaged)
    throw ConfigError("synthetic population: more positives than rows");
  FacetedBatch out;
  out.rows.reserve(advantaged + disadvantaged);
  for (std::size_t i = 0; i < advantaged; ++i)
    out.rows.push_back({i < advantaged_positive ? 1 : 0, std::nullopt, Facet::advantaged});
  for (std::size_t i = 0; i < disadvantaged; ++i)
    out.rows.push_back({i < disadvantaged_positive ? 1 : 0, std::nullopt, Facet::disadvantaged});
  std::mt19937_64 gen(mix_seed(seed, {0x706f70}));
  std::shuffle(out.rows.begin(), out.rows.end(), gen);
  return out;
}

std::vector<CaseStudyConfig> standard_case_study_configs(double b) {
  auto ordered = [](double x, double y) { return AcceptableRange{std::min(x, y), std::max(x, y)}; };
  return {{"no_bias", ordered(1.1 * b, -1.1 * b)},
          {"medium_bias", ordered(0.55 * b, -0.55 * b)},
          {"high_bias", {0.0, 0.0}}};
}

double CaseStudyCell::alarm_fraction() const {
  return repeats == 0 ? 0.0 : static_cast<double>(alarms) / static_cast<double>(repeats);
}

double CaseStudyCell::decision_accuracy(double b) const {
  const bool biased = b < range.low || b > range.high;
  return biased ? alarm_fraction() : 1.0 - alarm_fraction();
}

std::vector<CaseStudyCell> bias_case_study(const FacetedBatch& population, const std::vector<CaseStudyConfig>& configs,
                                           const std::vector<std::size_t>& sample_sizes,
                                           const CaseStudyOptions& options) {
  if (options.repeats == 0) throw ConfigError("bias case study: repeats must be at least 1");
  const std::size_t pool = population.rows.size();
  std::vector<CaseStudyCell> cells;
  std::vector<std::size_t> index(pool);
  std::vector<FacetedRow> sample;
  for (std::size_t c = 0; c < configs.size(); ++c) {
    for (const std::size_t size : sample_sizes) {
      if (size == 0 || size > pool) throw ConfigError("bias case study: sample size must lie in [1, population size]");
      CaseStudyCell cell{configs[c].label, configs[c].range, size, options.repeats, 0};
      for (std::size_t r = 0; r < options.repeats; ++r) {
        // Partial Fisher-Yates: the first `size` slots are a uniform sample
        // without replacement.
        std::iota(index.begin(), index.end(), std::size_t{0});
        std::mt19937_64 gen(mix_seed(options.seed, {c, size, r}));
        sample.clear();
        for (std::size_t i = 0; i < size; ++i) {
          const std::size_t j = i + bounded(gen(), pool - i);
          std::swap(index[i], index[j]);
          sample.push_back(population.rows[index[i]]);
        }
        BiasAlarmConfig cfg;
        cfg.range = configs[c].range;
        cfg.n_boot = options.n_boot;
        cfg.resample_frac = options.resample_frac;
        cfg.sample_cap = size;
        cfg.seed = mix_seed(options.seed, {c, size, r, 1});
        if (bias_alarm(sample, dpl, cfg).alarm) ++cell.alarms;
      }
      cells.push_back(cell);
    }
  }
  return cells;
}

std::string case_study_csv(const std::vector<CaseStudyCell>& cells) {
  std::ostringstream os;
  os << "config_label,range_low,range_high,sample_size,repeats,alarms,alarm_fraction\n";
  for (const auto& c : cells)
    os << c.config_label << ',' << format_double(c.range.low) << ',' << format_double(c.range.high) << ','
       << c.sample_size << ',' << c.repeats << ',' << c.alarms << ',' << format_double(c.alarm_fraction()) << '\n';
  return os.str();
}

}  // namespace modelmon
