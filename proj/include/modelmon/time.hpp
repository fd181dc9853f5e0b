#pragma once

#include <chrono>
#include <string>
#include <string_view>

namespace modelmon {

/// UTC instant with millisecond resolution. All partitioning and scheduling
/// works on UTC; offsets in input timestamps are converted on parse.
using UtcTime = std::chrono::sys_time<std::chrono::milliseconds>;

/// Parses RFC 3339 ("2021-06-01T01:30:00+02:00", "2020-10-29T22:00:00.894Z",
/// "2020-10-29T22:00Z"). Throws ParseError.
[[nodiscard]] UtcTime parse_utc(std::string_view text);

/// "2020-10-29T22:00:00Z"; milliseconds are appended only when nonzero
/// unless always_millis is set.
[[nodiscard]] std::string format_utc(UtcTime t, bool always_millis = false);

/// Zero-padded "YYYY/MM/DD/HH" of the UTC hour containing t.
[[nodiscard]] std::string partition_path(UtcTime t);

[[nodiscard]] UtcTime floor_hour(UtcTime t);

[[nodiscard]] std::int64_t epoch_millis(UtcTime t);

[[nodiscard]] UtcTime utc_now();

}  // namespace modelmon
