#pragma once

#include <charconv>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "shsnet/error.hpp"

namespace shsnet {

// Flat `key = value` text, one pair per line, '#' starts a comment.
using KeyValues = std::map<std::string, std::string>;

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

}  // namespace detail

inline KeyValues parse_key_values(std::string_view text) {
  KeyValues out;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    std::string_view line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    const std::string trimmed = detail::trim(line);
    if (trimmed.empty()) continue;
    const auto eq = trimmed.find('=');
    if (eq == std::string::npos) throw MalformedLine(line_no, "expected 'key = value'");
    std::string key = detail::trim(std::string_view(trimmed).substr(0, eq));
    std::string value = detail::trim(std::string_view(trimmed).substr(eq + 1));
    if (key.empty()) throw MalformedLine(line_no, "empty key");
    out[std::move(key)] = std::move(value);
  }
  return out;
}

inline KeyValues load_key_values(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::string text((std::istreambuf_iterator<char>(in)), {});
  return parse_key_values(text);
}

inline double parse_real(const std::string& key, const std::string& v) {
  double out = 0.0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) throw InvalidArgument("bad number for '" + key + "': " + v);
  return out;
}

inline std::size_t parse_count(const std::string& key, const std::string& v) {
  std::size_t out = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) throw InvalidArgument("bad integer for '" + key + "': " + v);
  return out;
}

inline bool parse_flag(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "on") return true;
  if (v == "false" || v == "0" || v == "off") return false;
  throw InvalidArgument("bad boolean for '" + key + "': " + v);
}

// Comma-separated integers, e.g. "128, 64, 32".
inline std::vector<std::size_t> parse_count_list(const std::string& key, const std::string& v) {
  std::vector<std::size_t> out;
  std::size_t pos = 0;
  while (pos <= v.size()) {
    const auto comma = v.find(',', pos);
    const std::string item = detail::trim(std::string_view(v).substr(pos, comma == std::string::npos ? std::string::npos : comma - pos));
    if (!item.empty()) out.push_back(parse_count(key, item));
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  return out;
}

template <class T>
std::string join_list(const std::vector<T>& values) {
  std::string s;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(values[i]);
  }
  return s;
}

inline std::string format_real(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

}  // namespace shsnet
