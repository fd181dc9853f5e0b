#pragma once

// Pretty printing and file I/O for the JSON documents a monitoring job reads
// and writes.

#include <filesystem>
#include <string>

#include <json.hpp>

namespace modelmon {

/// Two-space indented layout with `"key" : value` separators, matching the
/// report format consumers diff against. Arrays of scalars stay on one line.
[[nodiscard]] std::string pretty_json(const nlohmann::ordered_json& doc);

/// Writes `pretty_json(doc)` plus a newline through a temporary file and a
/// rename, creating parent directories.
void write_json_file(const std::filesystem::path& path, const nlohmann::ordered_json& doc);

/// Throws ParseError naming the file on I/O or syntax errors.
[[nodiscard]] nlohmann::ordered_json read_json_file(const std::filesystem::path& path);

/// Atomically replaces `path` with `contents`.
void write_text_file(const std::filesystem::path& path, const std::string& contents);

}  // namespace modelmon
