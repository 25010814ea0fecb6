#pragma once

/**
 * @file
 * @brief RFC 4180 CSV reading and writing, plus numeric matrix tables.
 */

#include <string>
#include <string_view>
#include <vector>

#include "../common.hpp"
#include "text.hpp"

namespace lpvgs::io {

struct CsvField
{
  std::string text;
  std::size_t line   = 0;
  std::size_t column = 0;
};

using CsvRecord = std::vector<CsvField>;

inline std::string csv_escape(std::string_view f)
{
  if (f.find_first_of(",\"\r\n") == std::string_view::npos) { return std::string(f); }
  std::string out = "\"";
  for (char c : f) {
    if (c == '"') { out += '"'; }
    out += c;
  }
  out += '"';
  return out;
}

/// One record terminated by CRLF.
inline std::string csv_row(const std::vector<std::string> & fields)
{
  std::string out;
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) { out += ','; }
    out += csv_escape(fields[i]);
  }
  out += "\r\n";
  return out;
}

/**
 * @brief Parse CSV text.  Accepts CRLF or LF line ends and a missing final line break.
 *
 * @throws ParseError on an unterminated quote or text after a closing quote.
 */
inline std::vector<CsvRecord> parse_csv(std::string_view text)
{
  std::vector<CsvRecord> records;
  CsvRecord rec;
  std::size_t i = 0, line = 1, col = 1;
  const std::size_t n = text.size();
  bool pending        = false;

  auto advance = [&](char c) {
    if (c == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  };

  while (i < n) {
    CsvField f;
    f.line   = line;
    f.column = col;
    if (text[i] == '"') {
      advance(text[i++]);
      bool closed = false;
      while (i < n) {
        const char c = text[i];
        if (c == '"') {
          if (i + 1 < n && text[i + 1] == '"') {
            f.text += '"';
            advance(text[i++]);
            advance(text[i++]);
            continue;
          }
          advance(text[i++]);
          closed = true;
          break;
        }
        f.text += c;
        advance(text[i++]);
      }
      if (!closed) { throw ParseError("unterminated quoted field", f.line, f.column); }
      if (i < n && text[i] != ',' && text[i] != '\r' && text[i] != '\n') {
        throw ParseError("unexpected character after closing quote", line, col);
      }
    } else {
      while (i < n && text[i] != ',' && text[i] != '\r' && text[i] != '\n') {
        if (text[i] == '"') { throw ParseError("quote inside unquoted field", line, col); }
        f.text += text[i];
        advance(text[i++]);
      }
    }
    rec.push_back(std::move(f));
    pending = true;
    if (i < n && text[i] == ',') {
      advance(text[i++]);
      if (i == n) { rec.push_back({"", line, col}); }
      continue;
    }
    if (i < n && text[i] == '\r') { advance(text[i++]); }
    if (i < n && text[i] == '\n') { advance(text[i++]); }
    records.push_back(std::move(rec));
    rec.clear();
    pending = false;
  }
  if (pending) { records.push_back(std::move(rec)); }
  return records;
}

/// Numeric table, one row per matrix row, with an optional header record.
inline std::string matrix_to_csv(const Matrix & M, const std::vector<std::string> & header = {})
{
  require_dim(header.empty() || static_cast<Index>(header.size()) == M.cols(), "matrix_to_csv: header width mismatch");
  std::string out;
  if (!header.empty()) { out += csv_row(header); }
  std::vector<std::string> row(static_cast<std::size_t>(M.cols()));
  for (Index i = 0; i < M.rows(); ++i) {
    for (Index j = 0; j < M.cols(); ++j) { row[static_cast<std::size_t>(j)] = format_double(M(i, j)); }
    out += csv_row(row);
  }
  return out;
}

/**
 * @brief Inverse of matrix_to_csv.
 *
 * @param header receives the header record when `has_header` is set.
 * @throws ParseError on ragged rows or non-numeric fields.
 */
inline Matrix matrix_from_csv(std::string_view text, bool has_header = false,
                              std::vector<std::string> * header = nullptr)
{
  const auto recs = parse_csv(text);
  std::size_t first = 0;
  if (has_header) {
    if (recs.empty()) { throw ParseError("missing header record", 1, 1); }
    if (header) {
      header->clear();
      for (const auto & f : recs[0]) { header->push_back(f.text); }
    }
    first = 1;
  }
  const Index rows = static_cast<Index>(recs.size() - first);
  if (rows == 0) { return Matrix(0, has_header ? static_cast<Index>(recs[0].size()) : 0); }
  const Index cols = static_cast<Index>(recs[first].size());
  Matrix M(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    const auto & r = recs[first + static_cast<std::size_t>(i)];
    if (static_cast<Index>(r.size()) != cols) {
      throw ParseError("expected " + std::to_string(cols) + " fields, found " + std::to_string(r.size()),
                       r.front().line, r.front().column);
    }
    for (Index j = 0; j < cols; ++j) {
      const auto & f = r[static_cast<std::size_t>(j)];
      M(i, j)        = parse_double(f.text, f.line, f.column);
    }
  }
  return M;
}

}  // namespace lpvgs::io
