#pragma once

// RFC 4180 CSV: quoted fields, doubled quotes, CRLF or LF line endings and
// newlines inside quotes.

#include <string>
#include <string_view>
#include <vector>

namespace modelmon {

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

/// All records, including the header line. Throws ParseError on an
/// unterminated quote or stray characters after a closing quote.
[[nodiscard]] std::vector<std::vector<std::string>> parse_csv_records(std::string_view text);

/// First record is the header. Throws ParseError naming the 1-based data row
/// when a row's width differs from the header's.
[[nodiscard]] CsvTable parse_csv(std::string_view text);

/// Exactly one record.
[[nodiscard]] std::vector<std::string> parse_csv_line(std::string_view line);

[[nodiscard]] std::string csv_escape(std::string_view field);
[[nodiscard]] std::string csv_join(const std::vector<std::string>& fields);

}  // namespace modelmon
