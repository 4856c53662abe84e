#pragma once

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "mrens/error.hpp"

namespace mrens::text {

// All emitted floating-point values use 6 significant digits so repeated runs
// produce byte-identical files.
inline std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v == 0.0 ? 0.0 : v);  // no "-0"
  return buf;
}

// The double nearest to fmt(v); used to store 6-digit values in JSON.
inline double round6(double v) { return std::stod(fmt(v)); }

inline std::vector<std::string> split(std::string_view line, char sep = ',') {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(sep, start);
    out.emplace_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline double parse_double(std::string_view s, const char* module) {
  s = trim(s);
  double v = 0.0;
  // from_chars for double is available in libstdc++ >= 11.
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) {
    throw Error(module, "BadNumber", "cannot parse '" + std::string(s) + "' as a number");
  }
  return v;
}

inline long long parse_int(std::string_view s, const char* module) {
  s = trim(s);
  long long v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) {
    throw Error(module, "BadNumber", "cannot parse '" + std::string(s) + "' as an integer");
  }
  return v;
}

// Reads a CSV file into rows of fields. Blank lines are skipped.
inline std::vector<std::vector<std::string>> read_csv(const std::filesystem::path& path, const char* module) {
  std::ifstream in(path);
  if (!in) throw Error(module, "IoFailure", "cannot open " + path.string());
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    auto fields = split(line);
    for (auto& f : fields) f = std::string(trim(f));
    rows.push_back(std::move(fields));
  }
  return rows;
}

inline void write_file(const std::filesystem::path& path, std::string_view content, const char* module) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(module, "IoFailure", "cannot write " + path.string());
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw Error(module, "IoFailure", "write failed for " + path.string());
}

}  // namespace mrens::text
