#include "modelmon/capture.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <memory>
#include <tuple>
#include <unordered_map>

#include <json.hpp>

#include "modelmon/errors.hpp"
#include "modelmon/report_json.hpp"
#include "modelmon/rng.hpp"

namespace modelmon {

namespace fs = std::filesystem;

namespace {

std::string dump_line(const nlohmann::ordered_json& j) {
  try {
    return j.dump();
  } catch (const nlohmann::json::type_error& e) {
    throw ValueError(std::string("capture record cannot be encoded: ") + e.what());
  }
}

nlohmann::json parse_object(std::string_view line, const char* what) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string(what) + ": " + e.what());
  }
  if (!j.is_object()) throw ParseError(std::string(what) + ": line is not a JSON object");
  return j;
}

std::string string_field(const nlohmann::json& j, const char* name, const char* what) {
  if (!j.contains(name) || !j.at(name).is_string())
    throw ParseError(std::string(what) + ": field '" + name + "' missing or not a string");
  return j.at(name).get<std::string>();
}

std::string label_field(const nlohmann::json& j, const char* what) {
  if (!j.contains("label")) throw ParseError(std::string(what) + ": missing field 'label'");
  const auto& v = j.at("label");
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number() || v.is_boolean()) return v.dump();
  throw ParseError(std::string(what) + ": field 'label' must be a string or a number");
}

// "<millis>-<seq>.jsonl" sorts numerically; anything else sorts after, by name.
std::tuple<int, std::int64_t, std::int64_t, std::string> file_order(const fs::path& p) {
  const std::string stem = p.stem().string();
  const auto dash = stem.find('-');
  std::int64_t millis = 0;
  std::int64_t seq = 0;
  if (dash != std::string::npos) {
    const auto* b = stem.data();
    const auto r1 = std::from_chars(b, b + dash, millis);
    const auto r2 = std::from_chars(b + dash + 1, b + stem.size(), seq);
    if (r1.ec == std::errc{} && r1.ptr == b + dash && r2.ec == std::errc{} && r2.ptr == b + stem.size())
      return {0, millis, seq, p.filename().string()};
  }
  return {1, 0, 0, p.filename().string()};
}

}  // namespace

std::string to_json_line(const CaptureRecord& r) {
  nlohmann::ordered_json j{{"event_id", r.event_id},
                           {"timestamp", format_utc(r.timestamp, true)},
                           {"input", r.input},
                           {"output", r.output}};
  return dump_line(j);
}

CaptureRecord capture_record_from_line(std::string_view line) {
  const auto j = parse_object(line, "capture record");
  CaptureRecord r;
  r.event_id = string_field(j, "event_id", "capture record");
  r.timestamp = parse_utc(string_field(j, "timestamp", "capture record"));
  r.input = string_field(j, "input", "capture record");
  r.output = string_field(j, "output", "capture record");
  return r;
}

std::string to_json_line(const GroundTruthRecord& r) {
  return dump_line(nlohmann::ordered_json{{"event_id", r.event_id}, {"label", r.label}});
}

GroundTruthRecord ground_truth_from_line(std::string_view line) {
  const auto j = parse_object(line, "ground truth record");
  return {string_field(j, "event_id", "ground truth record"), label_field(j, "ground truth record")};
}

std::string to_json_line(const JoinedRecord& r) {
  nlohmann::ordered_json j{{"event_id", r.capture.event_id},
                           {"timestamp", format_utc(r.capture.timestamp, true)},
                           {"input", r.capture.input},
                           {"output", r.capture.output},
                           {"label", r.label}};
  return dump_line(j);
}

JoinedRecord joined_record_from_line(std::string_view line) {
  const auto j = parse_object(line, "joined record");
  JoinedRecord r;
  r.capture = capture_record_from_line(line);
  r.label = label_field(j, "joined record");
  return r;
}

bool capture_decision(double percentage, std::uint64_t random_word) {
  if (!(percentage >= 0.0 && percentage <= 100.0)) throw ConfigError("sampling percentage must lie in [0, 100]");
  return unit_interval(random_word) * 100.0 < percentage;
}

CaptureSampler::CaptureSampler(double percentage, std::uint64_t seed) : percentage_(percentage), seed_(seed) {
  if (!(percentage >= 0.0 && percentage <= 100.0)) throw ConfigError("sampling percentage must lie in [0, 100]");
}

bool CaptureSampler::next() { return capture_decision(percentage_, mix_seed(seed_, {counter_++})); }

void FlushPolicy::validate() const {
  if (max_bytes == 0) throw ConfigError("flush policy: max_bytes must be positive");
  if (max_age.count() <= 0) throw ConfigError("flush policy: max_age must be positive");
}

std::size_t Flush::record_count() const {
  std::size_t n = 0;
  for (const auto& b : batches) n += b.lines.size();
  return n;
}

CaptureBuffer::CaptureBuffer(FlushPolicy policy) : policy_(policy) { policy_.validate(); }

std::optional<Flush> CaptureBuffer::append(const CaptureRecord& record, UtcTime now) {
  std::string line;
  try {
    line = to_json_line(record);
  } catch (const ValueError&) {
    ++rejected_;
    return poll(now);
  }
  if (entries_.empty()) oldest_ = now;
  bytes_ += line.size() + 1;
  entries_.push_back({partition_path(record.timestamp), std::move(line)});
  if (bytes_ >= policy_.max_bytes) return drain();
  return poll(now);
}

std::optional<Flush> CaptureBuffer::poll(UtcTime now) {
  if (entries_.empty() || now - *oldest_ < policy_.max_age) return std::nullopt;
  return drain();
}

Flush CaptureBuffer::drain() {
  Flush out;
  std::unordered_map<std::string, std::size_t> index;
  for (auto& e : entries_) {
    auto [it, inserted] = index.try_emplace(e.partition, out.batches.size());
    if (inserted) out.batches.push_back({e.partition, {}});
    out.batches[it->second].lines.push_back(std::move(e.line));
  }
  entries_.clear();
  bytes_ = 0;
  oldest_.reset();
  return out;
}

std::vector<fs::path> write_flush(const fs::path& capture_root, const Flush& flush, UtcTime now,
                                  std::uint64_t& sequence) {
  std::vector<fs::path> written;
  const fs::path staging_dir = capture_root / ".staging";
  fs::create_directories(staging_dir);
  for (const auto& batch : flush.batches) {
    const std::string name = std::to_string(epoch_millis(now)) + "-" + std::to_string(sequence++) + ".jsonl";
    const fs::path staged = staging_dir / name;
    {
      std::ofstream f(staged, std::ios::binary | std::ios::trunc);
      if (!f) throw std::runtime_error("cannot write " + staged.string());
      for (const auto& line : batch.lines) f << line << '\n';
      if (!f.flush()) throw std::runtime_error("cannot write " + staged.string());
    }
    const fs::path target_dir = capture_root / batch.partition;
    fs::create_directories(target_dir);
    fs::rename(staged, target_dir / name);
    written.push_back(target_dir / name);
  }
  return written;
}

CaptureDaemon::CaptureDaemon(FlushPolicy policy, Sink sink, Clock clock, std::chrono::milliseconds poll_interval)
    : buffer_(policy), sink_(std::move(sink)), clock_(std::move(clock)), poll_interval_(poll_interval) {
  writer_ = std::thread([this] { run(); });
}

CaptureDaemon::~CaptureDaemon() { stop(); }

void CaptureDaemon::append(const CaptureRecord& record) {
  std::lock_guard lock(mutex_);
  if (stopping_) throw std::logic_error("capture daemon: append after stop");
  if (auto f = buffer_.append(record, clock_())) {
    pending_.push_back(std::move(*f));
    wake_.notify_one();
  }
}

void CaptureDaemon::flush() {
  std::unique_lock lock(mutex_);
  if (buffer_.size() > 0) pending_.push_back(buffer_.drain());
  wake_.notify_one();
  idle_.wait(lock, [this] { return pending_.empty() && !writing_; });
}

void CaptureDaemon::stop() {
  {
    std::lock_guard lock(mutex_);
    if (stopping_) return;
    if (buffer_.size() > 0) pending_.push_back(buffer_.drain());
    stopping_ = true;
  }
  wake_.notify_one();
  if (writer_.joinable()) writer_.join();
}

std::uint64_t CaptureDaemon::rejected() const {
  std::lock_guard lock(mutex_);
  return buffer_.rejected();
}

std::uint64_t CaptureDaemon::flushed_records() const {
  std::lock_guard lock(mutex_);
  return flushed_records_;
}

std::uint64_t CaptureDaemon::failed_flushes() const {
  std::lock_guard lock(mutex_);
  return failed_flushes_;
}

void CaptureDaemon::run() {
  std::unique_lock lock(mutex_);
  while (true) {
    wake_.wait_for(lock, poll_interval_, [this] { return !pending_.empty() || stopping_; });
    if (pending_.empty() && !stopping_) {
      if (auto f = buffer_.poll(clock_())) pending_.push_back(std::move(*f));
    }
    while (!pending_.empty()) {
      Flush f = std::move(pending_.front());
      pending_.pop_front();
      writing_ = true;
      lock.unlock();
      bool ok = true;
      try {
        sink_(f);
      } catch (...) {
        ok = false;
      }
      lock.lock();
      writing_ = false;
      if (ok) flushed_records_ += f.record_count();
      else ++failed_flushes_;
    }
    idle_.notify_all();
    if (stopping_) return;
  }
}

CaptureDaemon::Sink directory_sink(fs::path capture_root) {
  auto sequence = std::make_shared<std::uint64_t>(0);
  return [root = std::move(capture_root), sequence](const Flush& f) { write_flush(root, f, utc_now(), *sequence); };
}

std::optional<PartitionRead> read_partition(const fs::path& root, UtcTime hour) {
  const fs::path dir = root / partition_path(hour);
  if (!fs::is_directory(dir)) return std::nullopt;
  PartitionRead out;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.is_regular_file() && entry.path().extension() == ".jsonl") out.files.push_back(entry.path());
  std::sort(out.files.begin(), out.files.end(),
            [](const fs::path& a, const fs::path& b) { return file_order(a) < file_order(b); });
  for (const auto& file : out.files) {
    std::ifstream f(file, std::ios::binary);
    if (!f) throw ParseError("cannot read " + file.string());
    std::string line;
    while (std::getline(f, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (!line.empty()) out.lines.push_back(std::move(line));
    }
  }
  return out;
}

std::optional<CaptureReadResult> read_capture_partition(const fs::path& root, UtcTime hour) {
  auto raw = read_partition(root, hour);
  if (!raw) return std::nullopt;
  CaptureReadResult out;
  for (const auto& line : raw->lines) {
    try {
      out.records.push_back(capture_record_from_line(line));
    } catch (const ParseError&) {
      ++out.malformed_lines;
    }
  }
  return out;
}

std::optional<LabelReadResult> read_label_partition(const fs::path& root, UtcTime hour) {
  auto raw = read_partition(root, hour);
  if (!raw) return std::nullopt;
  LabelReadResult out;
  for (const auto& line : raw->lines) {
    try {
      out.records.push_back(ground_truth_from_line(line));
    } catch (const ParseError&) {
      ++out.malformed_lines;
    }
  }
  return out;
}

JoinResult join_ground_truth(std::span<const CaptureRecord> captures, std::span<const GroundTruthRecord> labels) {
  std::unordered_map<std::string, const GroundTruthRecord*> latest;
  for (const auto& l : labels) latest[l.event_id] = &l;

  JoinResult out;
  out.counts.captured = captures.size();
  out.counts.labeled = latest.size();
  std::unordered_map<std::string, bool> matched;
  for (const auto& c : captures) {
    const auto it = latest.find(c.event_id);
    if (it == latest.end()) {
      ++out.counts.unlabeled;
      continue;
    }
    matched[c.event_id] = true;
    out.rows.push_back({c, it->second->label});
  }
  out.counts.joined = out.rows.size();
  out.counts.orphan_labels = latest.size() - matched.size();
  return out;
}

JoinResult join_partition(const fs::path& capture_root, const fs::path& labels_root, const fs::path& joined_root,
                          UtcTime hour) {
  const auto captures = read_capture_partition(capture_root, hour).value_or(CaptureReadResult{});
  const auto labels = read_label_partition(labels_root, hour).value_or(LabelReadResult{});
  auto result = join_ground_truth(captures.records, labels.records);
  std::string text;
  for (const auto& row : result.rows) text += to_json_line(row) + "\n";
  write_text_file(joined_root / partition_path(hour) / kJoinedFile, text);
  return result;
}

}  // namespace modelmon
