#pragma once

#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <string>
#include <string_view>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "evade/error.hpp"

namespace evade::detail {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

// "<file>:<line>" style location used in error messages.
struct Where {
  std::string_view name;
  std::size_t line = 0;

  std::string str() const { return fmt::format("{}:{}", name, line); }
};

[[noreturn]] inline void fail_field(const Where& where, std::string_view field,
                                    std::string_view problem) {
  throw DataError(
      fmt::format("{}: field '{}': {}", where.str(), field, problem));
}

inline const json& require(const json& obj, std::string_view field,
                           const Where& where) {
  auto it = obj.find(field);
  if (it == obj.end()) fail_field(where, field, "missing");
  return *it;
}

inline std::string require_string(const json& obj, std::string_view field,
                                  const Where& where) {
  const json& v = require(obj, field, where);
  if (!v.is_string()) fail_field(where, field, "expected a string");
  return v.get<std::string>();
}

// Calls `fn(value, where)` for each non-blank line of a JSONL stream.
// Throws DataError naming the line on invalid JSON.
inline void for_each_jsonl(
    std::istream& in, std::string_view name,
    const std::function<void(const json&, const Where&)>& fn) {
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (line.find_first_not_of(" \t\r\n") == std::string::npos) continue;
    const Where where{name, number};
    json value;
    try {
      value = json::parse(line);
    } catch (const json::parse_error& e) {
      throw DataError(
          fmt::format("{}: invalid JSON: {}", where.str(), e.what()));
    }
    fn(value, where);
  }
}

inline std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw DataError(fmt::format("cannot open '{}' for reading", path.string()));
  }
  return in;
}

inline json read_json_file(const std::filesystem::path& path) {
  auto in = open_input(path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw DataError(
        fmt::format("{}: invalid JSON: {}", path.string(), e.what()));
  }
}

// Writes `content` to `path`, creating parent directories.
inline void write_text_file(const std::filesystem::path& path,
                            std::string_view content) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw DataError(fmt::format("cannot open '{}' for writing", path.string()));
  }
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) {
    throw DataError(fmt::format("failed writing '{}'", path.string()));
  }
}

inline std::string dump_line(const ordered_json& value) {
  return value.dump(-1, ' ', false, json::error_handler_t::replace) + "\n";
}

inline std::string dump_pretty(const ordered_json& value) {
  return value.dump(2, ' ', false, json::error_handler_t::replace) + "\n";
}

}  // namespace evade::detail
