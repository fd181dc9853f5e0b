#include "modelmon/report_json.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "modelmon/errors.hpp"

namespace modelmon {

namespace {

bool is_scalar(const nlohmann::ordered_json& j) { return !j.is_object() && !j.is_array(); }

void emit(const nlohmann::ordered_json& j, int depth, std::string& out) {
  const std::string pad(static_cast<std::size_t>(depth + 1) * 2, ' ');
  const std::string closing(static_cast<std::size_t>(depth) * 2, ' ');
  if (j.is_object()) {
    if (j.empty()) {
      out += "{ }";
      return;
    }
    out += "{\n";
    bool first = true;
    for (const auto& [key, value] : j.items()) {
      if (!first) out += ",\n";
      first = false;
      out += pad;
      out += nlohmann::ordered_json(key).dump();
      out += " : ";
      emit(value, depth + 1, out);
    }
    out += "\n" + closing + "}";
    return;
  }
  if (j.is_array()) {
    if (j.empty()) {
      out += "[ ]";
      return;
    }
    const bool flat = std::all_of(j.begin(), j.end(), is_scalar);
    if (flat) {
      out += "[ ";
      bool first = true;
      for (const auto& v : j) {
        if (!first) out += ", ";
        first = false;
        out += v.dump();
      }
      out += " ]";
      return;
    }
    out += "[\n";
    bool first = true;
    for (const auto& v : j) {
      if (!first) out += ",\n";
      first = false;
      out += pad;
      emit(v, depth + 1, out);
    }
    out += "\n" + closing + "]";
    return;
  }
  out += j.dump();
}

}  // namespace

std::string pretty_json(const nlohmann::ordered_json& doc) {
  std::string out;
  emit(doc, 0, out);
  return out;
}

void write_text_file(const std::filesystem::path& path, const std::string& contents) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto staging = path;
  staging += ".tmp";
  {
    std::ofstream f(staging, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot write " + staging.string());
    f << contents;
    if (!f.flush()) throw std::runtime_error("cannot write " + staging.string());
  }
  std::filesystem::rename(staging, path);
}

void write_json_file(const std::filesystem::path& path, const nlohmann::ordered_json& doc) {
  write_text_file(path, pretty_json(doc) + "\n");
}

nlohmann::ordered_json read_json_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ParseError("cannot read " + path.string());
  std::stringstream buf;
  buf << f.rdbuf();
  try {
    return nlohmann::ordered_json::parse(buf.str());
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

}  // namespace modelmon
