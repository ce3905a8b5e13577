/*
 * Copyright (c) 2026, The a3s authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

// Dataset readers and run-output writers.
//
// Feature matrices are either delimited text (one sample per line, columns
// separated by whitespace and/or commas, '#' starts a comment) or NumPy .npy
// files holding a 1-D or 2-D float64/float32 array. Labels are one
// non-negative integer per line; assets one path per line.

#include <cerrno>
#include <cstdint>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "a3s/core.hpp"
#include "a3s/engine.hpp"

namespace a3s {

namespace detail {

inline std::ifstream open_in(const std::string& path, bool binary = false) {
  std::ifstream in(path, binary ? std::ios::binary : std::ios::in);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  return in;
}

inline std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  return out;
}

inline std::string strip_comment(const std::string& line) {
  const auto pos = line.find('#');
  return pos == std::string::npos ? line : line.substr(0, pos);
}

inline bool blank(const std::string& s) { return s.find_first_not_of(" \t\r\n") == std::string::npos; }

}  // namespace detail

inline Matrix parse_text_matrix(std::istream& in, const std::string& name = "<stream>") {
  Matrix m;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = detail::strip_comment(line);
    for (auto& ch : line)
      if (ch == ',') ch = ' ';
    if (detail::blank(line)) continue;
    std::size_t cols = 0;
    const char* p = line.c_str();
    while (true) {
      while (*p == ' ' || *p == '\t' || *p == '\r') ++p;
      if (!*p) break;
      char* end = nullptr;
      errno = 0;
      const double v = std::strtod(p, &end);
      if (end == p || errno == ERANGE || (*end && *end != ' ' && *end != '\t' && *end != '\r'))
        throw IoError(name + ":" + std::to_string(lineno) + ": not a number");
      m.data.push_back(v);
      ++cols;
      p = end;
    }
    if (m.rows == 0) m.cols = cols;
    if (cols != m.cols)
      throw IoError(name + ":" + std::to_string(lineno) + ": expected " + std::to_string(m.cols) + " columns, got " +
                    std::to_string(cols));
    ++m.rows;
  }
  if (m.rows == 0) throw IoError(name + ": no data rows");
  return m;
}

inline Matrix read_npy(const std::string& path) {
  auto in = detail::open_in(path, true);
  char magic[6];
  if (!in.read(magic, 6) || std::memcmp(magic, "\x93NUMPY", 6) != 0) throw IoError(path + ": not an .npy file");
  unsigned char version[2];
  in.read(reinterpret_cast<char*>(version), 2);
  std::uint32_t header_len = 0;
  if (version[0] == 1) {
    unsigned char b[2];
    in.read(reinterpret_cast<char*>(b), 2);
    header_len = b[0] | (b[1] << 8);
  } else if (version[0] == 2 || version[0] == 3) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    header_len = b[0] | (b[1] << 8) | (b[2] << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
  } else {
    throw IoError(path + ": unsupported .npy version");
  }
  std::string header(header_len, '\0');
  if (!in.read(header.data(), header_len)) throw IoError(path + ": truncated .npy header");

  auto value_of = [&](const std::string& key) {
    const auto k = header.find("'" + key + "'");
    if (k == std::string::npos) throw IoError(path + ": .npy header lacks " + key);
    const auto colon = header.find(':', k);
    return header.substr(colon + 1);
  };
  const std::string descr_field = value_of("descr");
  const auto q1 = descr_field.find('\'');
  const auto q2 = descr_field.find('\'', q1 + 1);
  const std::string descr = descr_field.substr(q1 + 1, q2 - q1 - 1);
  std::size_t width = 0;
  if (descr == "<f8" || descr == "=f8")
    width = 8;
  else if (descr == "<f4" || descr == "=f4")
    width = 4;
  else
    throw IoError(path + ": unsupported dtype '" + descr + "' (expected little-endian f8 or f4)");
  const bool fortran = value_of("fortran_order").find("True") < value_of("fortran_order").find(',');
  const std::string shape_field = value_of("shape");
  const auto open = shape_field.find('(');
  const auto close = shape_field.find(')');
  std::vector<std::size_t> shape;
  std::stringstream ss(shape_field.substr(open + 1, close - open - 1));
  std::string tok;
  while (std::getline(ss, tok, ','))
    if (!detail::blank(tok)) shape.push_back(std::stoull(tok));
  if (shape.empty() || shape.size() > 2) throw IoError(path + ": expected a 1-D or 2-D array");
  const std::size_t rows = shape[0];
  const std::size_t cols = shape.size() == 2 ? shape[1] : 1;

  Matrix m(rows, cols);
  std::vector<char> raw(rows * cols * width);
  if (!in.read(raw.data(), static_cast<std::streamsize>(raw.size()))) throw IoError(path + ": truncated .npy data");
  for (std::size_t k = 0; k < rows * cols; ++k) {
    double v;
    if (width == 8) {
      std::memcpy(&v, raw.data() + k * 8, 8);
    } else {
      float f;
      std::memcpy(&f, raw.data() + k * 4, 4);
      v = f;
    }
    if (fortran)
      m(k % rows, k / rows) = v;
    else
      m.data[k] = v;
  }
  return m;
}

inline void write_npy(const std::string& path, const Matrix& m) {
  auto out = detail::open_out(path);
  std::string header = "{'descr': '<f8', 'fortran_order': False, 'shape': (" + std::to_string(m.rows) + ", " +
                       std::to_string(m.cols) + "), }";
  const std::size_t total = 10 + header.size() + 1;
  header.append((64 - total % 64) % 64, ' ');
  header.push_back('\n');
  out.write("\x93NUMPY\x01\x00", 8);
  const auto len = static_cast<std::uint16_t>(header.size());
  const char lb[2] = {static_cast<char>(len & 0xff), static_cast<char>(len >> 8)};
  out.write(lb, 2);
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  out.write(reinterpret_cast<const char*>(m.data.data()), static_cast<std::streamsize>(m.data.size() * 8));
  if (!out) throw IoError("failed writing '" + path + "'");
}

inline Matrix read_matrix(const std::string& path) {
  if (std::filesystem::path(path).extension() == ".npy") return read_npy(path);
  auto in = detail::open_in(path);
  return parse_text_matrix(in, path);
}

inline void write_text_matrix(const std::string& path, const Matrix& m) {
  auto out = detail::open_out(path);
  out << std::setprecision(17);
  for (std::size_t i = 0; i < m.rows; ++i) {
    for (std::size_t j = 0; j < m.cols; ++j) out << (j ? " " : "") << m(i, j);
    out << '\n';
  }
  if (!out) throw IoError("failed writing '" + path + "'");
}

inline std::vector<std::int64_t> read_labels(const std::string& path) {
  auto in = detail::open_in(path);
  std::vector<std::int64_t> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = detail::strip_comment(line);
    if (detail::blank(line)) continue;
    std::istringstream row(line);
    long long v = 0;
    std::string rest;
    if (!(row >> v) || (row >> rest) || v < 0)
      throw IoError(path + ":" + std::to_string(lineno) + ": expected one non-negative integer");
    out.push_back(v);
  }
  return out;
}

inline void write_labels(const std::string& path, const std::vector<std::int64_t>& labels) {
  auto out = detail::open_out(path);
  for (auto y : labels) out << y << '\n';
  if (!out) throw IoError("failed writing '" + path + "'");
}

inline std::vector<std::string> read_assets(const std::string& path) {
  auto in = detail::open_in(path);
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    out.push_back(line);
  }
  return out;
}

inline Dataset load_dataset(const std::string& data_path, const std::optional<std::string>& labels_path = std::nullopt,
                            const std::optional<std::string>& assets_path = std::nullopt) {
  Dataset d;
  d.features = read_matrix(data_path);
  if (labels_path) d.labels = read_labels(*labels_path);
  if (assets_path) d.assets = read_assets(*assets_path);
  d.validate();
  return d;
}

/// One dense cluster id per line, in sample order.
inline void write_assignment(const std::string& path, const Clustering& c) {
  auto out = detail::open_out(path);
  for (auto id : c.dense_labels()) out << id << '\n';
  if (!out) throw IoError("failed writing '" + path + "'");
}

inline std::vector<std::uint32_t> read_assignment(const std::string& path) {
  auto in = detail::open_in(path);
  std::vector<std::uint32_t> out;
  std::uint32_t v;
  while (in >> v) out.push_back(v);
  return out;
}

inline void write_metrics_csv(const std::string& path, const std::vector<MetricsSnapshot>& series) {
  auto out = detail::open_out(path);
  out << "queries_used,k,nmi,ari,purity,upsilon,r\n" << std::setprecision(10);
  for (const auto& s : series) {
    out << s.queries_used << ',' << s.k;
    if (s.report) {
      out << ',' << s.report->nmi << ',' << s.report->ari << ',' << s.report->purity << ',' << s.report->fission_rate
          << ',';
      if (s.report->entropy_ratio) out << *s.report->entropy_ratio;
    } else {
      out << ",,,,,";
    }
    out << '\n';
  }
  if (!out) throw IoError("failed writing '" + path + "'");
}

inline void write_text(const std::string& path, const std::string& text) {
  auto out = detail::open_out(path);
  out << text;
  if (!out) throw IoError("failed writing '" + path + "'");
}

}  // namespace a3s
