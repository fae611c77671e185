#pragma once

// `key = value` text blocks: one pair per line, '#' starts a comment. Used
// for network specs inside checkpoints and for training config files.

#include <charconv>
#include <cmath>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "vxseg/errors.hpp"

namespace vxseg::detail {

inline std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

// Parses a block; `what` prefixes error messages. Duplicate keys and lines
// without '=' throw ContractViolation.
inline std::map<std::string, std::string> parse_kv(std::string_view text, std::string_view what) {
  std::map<std::string, std::string> out;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    VXSEG_REQUIRE(eq != std::string_view::npos, what, " line ", line_no,
                  ": expected 'key = value', got '", line, "'");
    const std::string key(trim(line.substr(0, eq)));
    VXSEG_REQUIRE(!key.empty(), what, " line ", line_no, ": empty key");
    VXSEG_REQUIRE(out.emplace(key, std::string(trim(line.substr(eq + 1)))).second, what, " line ",
                  line_no, ": duplicate key '", key, "'");
  }
  return out;
}

// Shortest text that parses back to exactly the same double.
inline std::string format_double(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

// Shortest text that parses back (through double, then float) to v.
inline std::string format_float(float v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

inline double parse_double(std::string_view key, std::string_view s) {
  double v = 0.0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  VXSEG_REQUIRE(r.ec == std::errc{} && r.ptr == s.data() + s.size() && std::isfinite(v), "'", key,
                "' expects a number, got '", s, "'");
  return v;
}

inline long long parse_int(std::string_view key, std::string_view s) {
  long long v = 0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  VXSEG_REQUIRE(r.ec == std::errc{} && r.ptr == s.data() + s.size(), "'", key,
                "' expects an integer, got '", s, "'");
  return v;
}

inline unsigned long long parse_uint(std::string_view key, std::string_view s) {
  unsigned long long v = 0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  VXSEG_REQUIRE(r.ec == std::errc{} && r.ptr == s.data() + s.size(), "'", key,
                "' expects a nonnegative integer, got '", s, "'");
  return v;
}

// Comma-separated list; an empty string is an empty list.
template <typename T, typename Parse>
std::vector<T> parse_list(std::string_view key, std::string_view s, Parse parse) {
  std::vector<T> out;
  s = trim(s);
  if (s.empty()) return out;
  while (true) {
    const auto comma = s.find(',');
    out.push_back(static_cast<T>(parse(key, trim(s.substr(0, comma)))));
    if (comma == std::string_view::npos) break;
    s = s.substr(comma + 1);
  }
  return out;
}

template <typename T, typename Format>
std::string format_list(const std::vector<T>& v, Format format) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ", ";
    s += format(v[i]);
  }
  return s;
}

// Renders a map as sorted `key = value` lines.
inline std::string render_kv(const std::map<std::string, std::string>& kv) {
  std::string s;
  for (const auto& [k, v] : kv) s += k + " = " + v + "\n";
  return s;
}

}  // namespace vxseg::detail
