#pragma once

// Plain comma-separated text with a header row and no locale dependence.
// Doubles are printed in shortest round-trip form so that re-parsing a
// written file yields the same bits.

#include <charconv>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include <fmt/format.h>

#include "gitloss/errors.hpp"
#include "gitloss/metrics.hpp"

namespace gitloss::csv {

inline std::string num(double v) { return fmt::format("{}", v); }

inline std::vector<std::string_view> split(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    out.push_back(line.substr(start, comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline double parse_double(std::string_view field, const std::string& where) {
  field = trim(field);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  if (ec != std::errc{} || ptr != field.data() + field.size()) {
    throw FormatError(where + ": not a number: '" + std::string(field) + "'");
  }
  return v;
}

inline std::size_t parse_index(std::string_view field, const std::string& where) {
  field = trim(field);
  std::size_t v = 0;
  const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  if (ec != std::errc{} || ptr != field.data() + field.size()) {
    throw FormatError(where + ": not a non-negative integer: '" + std::string(field) + "'");
  }
  return v;
}

inline std::string read_text(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open " + path + " for writing");
  os << text;
  if (!os) throw IoError("failed writing " + path);
}

/// Embedding exchange format: header "label,f1,...,fd", one sample per row.
inline std::string format_embeddings(const EmbeddingSet& emb) {
  std::string out = "label";
  for (std::size_t k = 1; k <= emb.features.cols(); ++k) out += fmt::format(",f{}", k);
  out += '\n';
  for (std::size_t i = 0; i < emb.labels.size(); ++i) {
    out += std::to_string(emb.labels[i]);
    for (double v : emb.features.row(i)) {
      out += ',';
      out += num(v);
    }
    out += '\n';
  }
  return out;
}

inline void write_embeddings(const std::string& path, const EmbeddingSet& emb) {
  write_text(path, format_embeddings(emb));
}

inline EmbeddingSet parse_embeddings(std::string_view text, const std::string& origin) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start < text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    auto line = trim(text.substr(start, end - start));
    if (!line.empty()) lines.push_back(line);
    start = end + 1;
  }
  if (lines.empty()) throw ParameterError(origin + ": embedding file is empty");
  const auto header = split(lines.front());
  if (header.size() < 2 || trim(header.front()) != "label") {
    throw FormatError(origin + ": expected header 'label,f1,...,fd'");
  }
  const std::size_t d = header.size() - 1;
  const std::size_t n = lines.size() - 1;
  if (n == 0) throw ParameterError(origin + ": embedding file has no samples");
  EmbeddingSet emb;
  emb.features = Matrix(n, d);
  emb.labels.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto where = origin + ":" + std::to_string(i + 2);
    const auto fields = split(lines[i + 1]);
    if (fields.size() != d + 1) {
      throw FormatError(where + ": expected " + std::to_string(d + 1) + " fields, got " +
                        std::to_string(fields.size()));
    }
    emb.labels.push_back(parse_index(fields[0], where));
    for (std::size_t k = 0; k < d; ++k) emb.features(i, k) = parse_double(fields[k + 1], where);
  }
  return emb;
}

inline EmbeddingSet read_embeddings(const std::string& path) {
  return parse_embeddings(read_text(path), path);
}

}  // namespace gitloss::csv
