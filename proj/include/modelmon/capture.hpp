#pragma once

// Inference capture: per-request sampling, an in-memory JSON-lines buffer
// flushed on size or age into hourly UTC partitions, a background writer so
// request threads never wait on disk, and the identifier-keyed join with
// later-arriving ground truth.

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <functional>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "modelmon/time.hpp"

namespace modelmon {

struct CaptureRecord {
  std::string event_id;
  UtcTime timestamp{};
  std::string input;   // verbatim request payload
  std::string output;  // verbatim response payload

  friend bool operator==(const CaptureRecord&, const CaptureRecord&) = default;
};

/// {"event_id","timestamp","input","output"} on one line. Throws ValueError
/// when a field cannot be encoded (e.g. invalid UTF-8).
[[nodiscard]] std::string to_json_line(const CaptureRecord& record);
/// Throws ParseError.
[[nodiscard]] CaptureRecord capture_record_from_line(std::string_view line);

struct GroundTruthRecord {
  std::string event_id;
  std::string label;  // verbatim; numbers are kept in their JSON spelling

  friend bool operator==(const GroundTruthRecord&, const GroundTruthRecord&) = default;
};

[[nodiscard]] std::string to_json_line(const GroundTruthRecord& record);
/// {"event_id","label"} where label is a string or a number. Throws ParseError.
[[nodiscard]] GroundTruthRecord ground_truth_from_line(std::string_view line);

// ---------------------------------------------------------------------------
// Sampling

/// True with probability percentage / 100 for a uniform random word.
/// Throws ConfigError unless 0 <= percentage <= 100.
[[nodiscard]] bool capture_decision(double percentage, std::uint64_t random_word);

/// Seeded, counter-based stream of capture decisions.
class CaptureSampler {
 public:
  CaptureSampler(double percentage, std::uint64_t seed);
  [[nodiscard]] bool next();
  [[nodiscard]] double percentage() const noexcept { return percentage_; }

 private:
  double percentage_;
  std::uint64_t seed_;
  std::uint64_t counter_ = 0;
};

// ---------------------------------------------------------------------------
// Buffering

struct FlushPolicy {
  std::size_t max_bytes = 1U << 20;
  std::chrono::milliseconds max_age{60'000};

  /// Throws ConfigError unless both thresholds are positive.
  void validate() const;
};

/// Lines for one hourly partition, in arrival order.
struct PartitionBatch {
  std::string partition;
  std::vector<std::string> lines;
};

/// Partitions ordered by their first record's arrival.
struct Flush {
  std::vector<PartitionBatch> batches;
  [[nodiscard]] std::size_t record_count() const;
};

/// Single-writer buffer with no I/O of its own.
class CaptureBuffer {
 public:
  explicit CaptureBuffer(FlushPolicy policy = {});

  /// Appends one line; returns a flush once the buffered bytes reach
  /// max_bytes or the oldest buffered record is max_age old. A record that
  /// cannot be serialized is counted in rejected() and skipped.
  [[nodiscard]] std::optional<Flush> append(const CaptureRecord& record, UtcTime now);
  /// Age-based flush without a new record.
  [[nodiscard]] std::optional<Flush> poll(UtcTime now);
  /// Everything buffered, possibly empty.
  [[nodiscard]] Flush drain();

  [[nodiscard]] std::size_t bytes() const noexcept { return bytes_; }
  [[nodiscard]] std::size_t size() const noexcept { return entries_.size(); }
  [[nodiscard]] std::uint64_t rejected() const noexcept { return rejected_; }

 private:
  struct Entry {
    std::string partition;
    std::string line;
  };
  FlushPolicy policy_;
  std::vector<Entry> entries_;
  std::size_t bytes_ = 0;
  std::optional<UtcTime> oldest_;
  std::uint64_t rejected_ = 0;
};

/// Writes each batch as capture_root/<partition>/<epoch-millis>-<seq>.jsonl,
/// staging under capture_root/.staging and moving into place. Returns the
/// written paths.
std::vector<std::filesystem::path> write_flush(const std::filesystem::path& capture_root, const Flush& flush,
                                               UtcTime now, std::uint64_t& sequence);

/// Owns a CaptureBuffer and a writer thread. append() only takes a lock and
/// touches memory; flushes are handed to the sink on the writer thread, which
/// also performs age-based polling.
class CaptureDaemon {
 public:
  using Sink = std::function<void(const Flush&)>;
  using Clock = std::function<UtcTime()>;

  CaptureDaemon(FlushPolicy policy, Sink sink, Clock clock = utc_now,
                std::chrono::milliseconds poll_interval = std::chrono::milliseconds(200));
  /// Drains the buffer to the sink and joins the writer.
  ~CaptureDaemon();

  CaptureDaemon(const CaptureDaemon&) = delete;
  CaptureDaemon& operator=(const CaptureDaemon&) = delete;

  void append(const CaptureRecord& record);
  /// Hands the current buffer to the writer and waits until the sink has run.
  void flush();
  void stop();

  [[nodiscard]] std::uint64_t rejected() const;
  [[nodiscard]] std::uint64_t flushed_records() const;
  /// Flushes whose sink threw; their records are dropped.
  [[nodiscard]] std::uint64_t failed_flushes() const;

 private:
  void run();

  CaptureBuffer buffer_;
  Sink sink_;
  Clock clock_;
  std::chrono::milliseconds poll_interval_;
  mutable std::mutex mutex_;
  std::condition_variable wake_;
  std::condition_variable idle_;
  std::deque<Flush> pending_;
  bool writing_ = false;
  bool stopping_ = false;
  std::uint64_t flushed_records_ = 0;
  std::uint64_t failed_flushes_ = 0;
  std::thread writer_;
};

/// Sink that writes flushes under capture_root via write_flush.
[[nodiscard]] CaptureDaemon::Sink directory_sink(std::filesystem::path capture_root);

// ---------------------------------------------------------------------------
// Partitions and the ground-truth join

struct PartitionRead {
  std::vector<std::string> lines;
  std::vector<std::filesystem::path> files;
};

/// All .jsonl lines under root/<partition_path(hour)>, files ordered by
/// (epoch-millis, sequence) and then name. Missing directory -> nullopt.
[[nodiscard]] std::optional<PartitionRead> read_partition(const std::filesystem::path& root, UtcTime hour);

struct CaptureReadResult {
  std::vector<CaptureRecord> records;
  std::size_t malformed_lines = 0;
};
[[nodiscard]] std::optional<CaptureReadResult> read_capture_partition(const std::filesystem::path& root, UtcTime hour);

struct LabelReadResult {
  std::vector<GroundTruthRecord> records;
  std::size_t malformed_lines = 0;
};
[[nodiscard]] std::optional<LabelReadResult> read_label_partition(const std::filesystem::path& root, UtcTime hour);

struct JoinCounts {
  std::size_t captured = 0;
  std::size_t labeled = 0;  // distinct label ids
  std::size_t joined = 0;
  std::size_t unlabeled = 0;
  std::size_t orphan_labels = 0;

  friend bool operator==(const JoinCounts&, const JoinCounts&) = default;
};

struct JoinedRecord {
  CaptureRecord capture;
  std::string label;

  friend bool operator==(const JoinedRecord&, const JoinedRecord&) = default;
};

struct JoinResult {
  std::vector<JoinedRecord> rows;  // capture order
  JoinCounts counts;
};

/// Inner join on event_id; a repeated label id resolves to its last record.
[[nodiscard]] JoinResult join_ground_truth(std::span<const CaptureRecord> captures,
                                           std::span<const GroundTruthRecord> labels);

[[nodiscard]] std::string to_json_line(const JoinedRecord& record);
[[nodiscard]] JoinedRecord joined_record_from_line(std::string_view line);

inline constexpr const char* kJoinedFile = "joined.jsonl";

/// Joins one hour and writes joined_root/<partition>/joined.jsonl (replacing
/// any previous output). Missing partitions count as empty.
JoinResult join_partition(const std::filesystem::path& capture_root, const std::filesystem::path& labels_root,
                          const std::filesystem::path& joined_root, UtcTime hour);

}  // namespace modelmon
