#pragma once

/**
 * @file
 * @brief Matrix Market reader and writer for real dense (array) and sparse (coordinate) matrices.
 */

#include <algorithm>
#include <cctype>
#include <string>
#include <string_view>
#include <vector>

#include "../common.hpp"
#include "text.hpp"

namespace lpvgs::io {

enum class MmLayout { array, coordinate };

inline std::string to_matrix_market(const Matrix & M, MmLayout layout = MmLayout::array)
{
  std::string out;
  if (layout == MmLayout::array) {
    out = "%%MatrixMarket matrix array real general\n";
    out += std::to_string(M.rows()) + " " + std::to_string(M.cols()) + "\n";
    for (Index j = 0; j < M.cols(); ++j) {
      for (Index i = 0; i < M.rows(); ++i) { out += format_double(M(i, j)) + "\n"; }
    }
    return out;
  }
  Index nnz = 0;
  for (Index k = 0; k < M.size(); ++k) { nnz += M.data()[k] != 0.0 ? 1 : 0; }
  out = "%%MatrixMarket matrix coordinate real general\n";
  out += std::to_string(M.rows()) + " " + std::to_string(M.cols()) + " " + std::to_string(nnz) + "\n";
  for (Index j = 0; j < M.cols(); ++j) {
    for (Index i = 0; i < M.rows(); ++i) {
      if (M(i, j) != 0.0) {
        out += std::to_string(i + 1) + " " + std::to_string(j + 1) + " " + format_double(M(i, j)) + "\n";
      }
    }
  }
  return out;
}

namespace detail {

struct Token
{
  std::string_view text;
  std::size_t column;
};

inline std::vector<Token> split_ws(std::string_view line)
{
  std::vector<Token> toks;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) { ++i; }
    if (i >= line.size()) { break; }
    const std::size_t s = i;
    while (i < line.size() && !std::isspace(static_cast<unsigned char>(line[i]))) { ++i; }
    toks.push_back({line.substr(s, i - s), s + 1});
  }
  return toks;
}

inline std::string lower(std::string_view s)
{
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
  return out;
}

}  // namespace detail

/**
 * @brief Parse Matrix Market text (real or integer field; general, symmetric or skew-symmetric).
 *
 * @throws ParseError with the line and column of the first offending token.
 */
inline Matrix from_matrix_market(std::string_view text)
{
  std::vector<std::string_view> lines;
  for (std::size_t s = 0; s <= text.size();) {
    std::size_t e = text.find('\n', s);
    if (e == std::string_view::npos) { e = text.size(); }
    std::string_view l = text.substr(s, e - s);
    if (!l.empty() && l.back() == '\r') { l.remove_suffix(1); }
    lines.push_back(l);
    s = e + 1;
  }

  const auto head = detail::split_ws(lines.empty() ? std::string_view{} : lines[0]);
  if (head.empty() || head[0].text != "%%MatrixMarket") {
    throw ParseError("missing %%MatrixMarket banner", 1, head.empty() ? 1 : head[0].column);
  }
  if (head.size() != 5) { throw ParseError("banner needs object, format, field and symmetry", 1, head.back().column); }
  if (detail::lower(head[1].text) != "matrix") { throw ParseError("only 'matrix' objects are supported", 1, head[1].column); }
  const std::string fmt = detail::lower(head[2].text);
  if (fmt != "array" && fmt != "coordinate") { throw ParseError("unknown format '" + fmt + "'", 1, head[2].column); }
  const std::string field = detail::lower(head[3].text);
  if (field != "real" && field != "integer" && field != "double") {
    throw ParseError("unsupported field '" + field + "'", 1, head[3].column);
  }
  const std::string sym = detail::lower(head[4].text);
  if (sym != "general" && sym != "symmetric" && sym != "skew-symmetric") {
    throw ParseError("unsupported symmetry '" + sym + "'", 1, head[4].column);
  }
  const bool coord = fmt == "coordinate";

  std::size_t li = 1;
  auto next_data_line = [&]() -> std::vector<detail::Token> {
    while (li < lines.size()) {
      const auto t = detail::split_ws(lines[li]);
      ++li;
      if (t.empty() || t[0].text.front() == '%') { continue; }
      return t;
    }
    return {};
  };

  const auto size = next_data_line();
  const std::size_t size_line = li;
  if (size.size() != (coord ? 3U : 2U)) {
    throw ParseError("malformed size line", size_line, size.empty() ? 1 : size.front().column);
  }
  const long long rows = parse_integer(size[0].text, size_line, size[0].column);
  const long long cols = parse_integer(size[1].text, size_line, size[1].column);
  if (rows < 0 || cols < 0) { throw ParseError("negative dimension", size_line, size[0].column); }
  if (sym != "general" && rows != cols) { throw ParseError("symmetric storage needs a square matrix", size_line, 1); }
  Matrix M = Matrix::Zero(rows, cols);

  if (coord) {
    const long long nnz = parse_integer(size[2].text, size_line, size[2].column);
    for (long long e = 0; e < nnz; ++e) {
      const auto t = next_data_line();
      if (t.size() != 3) { throw ParseError("expected 'row column value'", li, t.empty() ? 1 : t.front().column); }
      const long long i = parse_integer(t[0].text, li, t[0].column);
      const long long j = parse_integer(t[1].text, li, t[1].column);
      if (i < 1 || i > rows) { throw ParseError("row index out of range", li, t[0].column); }
      if (j < 1 || j > cols) { throw ParseError("column index out of range", li, t[1].column); }
      const double v = parse_double(t[2].text, li, t[2].column);
      M(i - 1, j - 1) = v;
      if (sym == "symmetric" && i != j) { M(j - 1, i - 1) = v; }
      if (sym == "skew-symmetric" && i != j) { M(j - 1, i - 1) = -v; }
    }
  } else {
    auto fill = [&]() {
      const auto t = next_data_line();
      if (t.size() != 1) { throw ParseError("expected one value per line", li, t.empty() ? 1 : t.front().column); }
      return parse_double(t[0].text, li, t[0].column);
    };
    for (Index j = 0; j < cols; ++j) {
      const Index i0 = sym == "general" ? 0 : (sym == "symmetric" ? j : j + 1);
      for (Index i = i0; i < rows; ++i) {
        const double v = fill();
        M(i, j)        = v;
        if (sym == "symmetric") { M(j, i) = v; }
        if (sym == "skew-symmetric") { M(j, i) = -v; }
      }
    }
  }
  if (!next_data_line().empty()) { throw ParseError("trailing data after the last entry", li, 1); }
  return M;
}

}  // namespace lpvgs::io
