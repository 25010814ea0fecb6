#pragma once

/**
 * @file
 * @brief Shortest round-trip rendering and strict parsing of doubles.
 */

#include <charconv>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>

#include "../errors.hpp"

namespace lpvgs::io {

/// Shortest decimal that parses back to exactly `v`; "inf", "-inf", "nan" for non-finite values.
inline std::string format_double(double v)
{
  if (std::isnan(v)) { return "nan"; }
  if (std::isinf(v)) { return v > 0 ? "inf" : "-inf"; }
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

/// Whole-token parse; `line` and `column` locate the token for error messages.
inline double parse_double(std::string_view tok, std::size_t line, std::size_t column)
{
  if (tok == "nan" || tok == "NaN") { return std::nan(""); }
  if (tok == "inf" || tok == "Inf" || tok == "+inf") { return HUGE_VAL; }
  if (tok == "-inf" || tok == "-Inf") { return -HUGE_VAL; }
  std::string_view t = tok;
  if (!t.empty() && t.front() == '+') { t.remove_prefix(1); }
  double v       = 0.0;
  const auto res = std::from_chars(t.data(), t.data() + t.size(), v);
  if (t.empty() || res.ec != std::errc() || res.ptr != t.data() + t.size()) {
    throw ParseError("expected a number, got '" + std::string(tok) + "'", line, column);
  }
  return v;
}

inline long long parse_integer(std::string_view tok, std::size_t line, std::size_t column)
{
  long long v    = 0;
  const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (tok.empty() || res.ec != std::errc() || res.ptr != tok.data() + tok.size()) {
    throw ParseError("expected an integer, got '" + std::string(tok) + "'", line, column);
  }
  return v;
}

inline std::string read_file(const std::string & path)
{
  std::ifstream in(path, std::ios::binary);
  if (!in) { throw IoError("cannot open '" + path + "' for reading"); }
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::string & path, const std::string & content)
{
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) { throw IoError("cannot open '" + path + "' for writing"); }
  out << content;
  if (!out) { throw IoError("write to '" + path + "' failed"); }
}

}  // namespace lpvgs::io
