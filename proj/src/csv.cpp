#include "modelmon/csv.hpp"

#include "modelmon/errors.hpp"

namespace modelmon {

std::vector<std::vector<std::string>> parse_csv_records(std::string_view text) {
  std::vector<std::vector<std::string>> records;
  std::vector<std::string> record;
  std::string field;
  bool in_quotes = false;
  bool after_quote = false;  // just closed a quoted field
  bool record_open = false;
  std::size_t line = 1;

  auto end_field = [&] {
    record.push_back(std::move(field));
    field.clear();
    after_quote = false;
  };
  auto end_record = [&] {
    end_field();
    records.push_back(std::move(record));
    record.clear();
    record_open = false;
  };

  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          in_quotes = false;
          after_quote = true;
        }
      } else {
        if (c == '\n') ++line;
        field.push_back(c);
      }
      continue;
    }
    if (c == ',') {
      record_open = true;
      end_field();
    } else if (c == '\n' || c == '\r') {
      if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') ++i;
      end_record();
      ++line;
    } else if (c == '"' && field.empty() && !after_quote) {
      in_quotes = true;
      record_open = true;
    } else {
      if (after_quote) throw ParseError("csv line " + std::to_string(line) + ": text after closing quote");
      field.push_back(c);
      record_open = true;
    }
  }
  if (in_quotes) throw ParseError("csv line " + std::to_string(line) + ": unterminated quoted field");
  if (record_open || !field.empty() || !record.empty()) end_record();
  return records;
}

CsvTable parse_csv(std::string_view text) {
  auto records = parse_csv_records(text);
  if (records.empty()) throw ParseError("csv: missing header row");
  CsvTable table;
  table.header = std::move(records.front());
  for (std::size_t r = 1; r < records.size(); ++r) {
    if (records[r].size() != table.header.size())
      throw ParseError("csv row " + std::to_string(r) + ": expected " + std::to_string(table.header.size()) +
                       " fields, found " + std::to_string(records[r].size()));
    table.rows.push_back(std::move(records[r]));
  }
  return table;
}

std::vector<std::string> parse_csv_line(std::string_view line) {
  auto records = parse_csv_records(line);
  if (records.empty()) return {""};
  if (records.size() != 1) throw ParseError("csv: expected a single record");
  return std::move(records.front());
}

std::string csv_escape(std::string_view field) {
  if (field.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(field);
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

std::string csv_join(const std::vector<std::string>& fields) {
  std::string out;
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i > 0) out.push_back(',');
    out += csv_escape(fields[i]);
  }
  return out;
}

}  // namespace modelmon
