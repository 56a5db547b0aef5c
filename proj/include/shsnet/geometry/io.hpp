#pragma once

#include <cctype>
#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "shsnet/error.hpp"
#include "shsnet/geometry/point_cloud.hpp"

namespace shsnet {

namespace detail {

inline std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    std::size_t j = i;
    while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j]))) ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

inline bool parse_double(std::string_view tok, double& out) {
  if (!tok.empty() && tok.front() == '+') tok.remove_prefix(1);
  const auto* end = tok.data() + tok.size();
  auto [ptr, ec] = std::from_chars(tok.data(), end, out);
  return ec == std::errc() && ptr == end;
}

// Reads every non-empty, non-comment line as a row of numbers.
// Rows whose column count is not in `allowed` raise MalformedLine.
inline std::vector<std::vector<double>> read_rows(const std::filesystem::path& path,
                                                  std::initializer_list<std::size_t> allowed) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto toks = split_ws(line);
    if (toks.empty() || toks.front().front() == '#') continue;
    bool ok = false;
    for (auto a : allowed) ok = ok || toks.size() == a;
    if (!ok) throw MalformedLine(line_no, "unexpected column count " + std::to_string(toks.size()));
    if (!rows.empty() && rows.front().size() != toks.size()) throw MalformedLine(line_no, "mixed column counts");
    std::vector<double> row(toks.size());
    for (std::size_t c = 0; c < toks.size(); ++c) {
      if (!parse_double(toks[c], row[c])) throw MalformedLine(line_no, "non-numeric token '" + std::string(toks[c]) + "'");
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

inline void append_number(std::string& out, double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  out.append(buf, ptr);
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

}  // namespace detail

// Loads an ASCII point file with 3 (positions) or 6 (positions + normals)
// columns per line. Normals off unit length are renormalized.
inline PointCloud load_xyz(const std::filesystem::path& path) {
  auto rows = detail::read_rows(path, {3, 6});
  if (rows.empty()) throw EmptyCloud();
  const bool with_normals = rows.front().size() == 6;
  std::vector<Vec3> points;
  std::vector<Vec3> normals;
  points.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    points.emplace_back(r[0], r[1], r[2]);
    if (with_normals) {
      Vec3 n(r[3], r[4], r[5]);
      const double len = n.norm();
      if (!(len > 0.0) || !std::isfinite(len)) throw InvalidArgument("zero-length normal in row " + std::to_string(i + 1));
      // Leave already-unit normals untouched so save/load is bit-exact.
      normals.push_back(std::abs(len - 1.0) < 1e-12 ? n : Vec3(n / len));
    }
  }
  if (with_normals) return PointCloud(std::move(points), std::move(normals));
  return PointCloud(std::move(points));
}

// Shortest round-trip decimal representation, so reloading is exact.
inline void save_xyz(const std::filesystem::path& path, const PointCloud& cloud) {
  std::string text;
  text.reserve(cloud.size() * 64);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const auto& p = cloud.point(i);
    for (int c = 0; c < 3; ++c) {
      if (c) text += ' ';
      detail::append_number(text, p[c]);
    }
    if (cloud.has_normals()) {
      const auto& n = cloud.normals()[i];
      for (int c = 0; c < 3; ++c) {
        text += ' ';
        detail::append_number(text, n[c]);
      }
    }
    text += '\n';
  }
  detail::write_text(path, text);
}

inline std::vector<Vec3> load_normals(const std::filesystem::path& path) {
  auto rows = detail::read_rows(path, {3});
  std::vector<Vec3> normals;
  normals.reserve(rows.size());
  for (const auto& r : rows) {
    Vec3 n(r[0], r[1], r[2]);
    const double len = n.norm();
    normals.push_back(len > 0.0 ? Vec3(n / len) : n);
  }
  return normals;
}

inline void save_normals(const std::filesystem::path& path, const std::vector<Vec3>& normals) {
  std::string text;
  text.reserve(normals.size() * 48);
  for (const auto& n : normals) {
    for (int c = 0; c < 3; ++c) {
      if (c) text += ' ';
      detail::append_number(text, n[c]);
    }
    text += '\n';
  }
  detail::write_text(path, text);
}

}  // namespace shsnet
