#pragma once

/**
 * @file
 * @brief JSON helpers and the named-matrix bundle format.
 *
 * A bundle is {"format": "lpvgs-bundle", "version": 1, "matrices": {...}, "meta": {...}}
 * where each matrix is {"rows": m, "cols": n, "data": [row-major values]}.
 * Non-finite entries are stored as the strings "inf", "-inf" and "nan".
 */

#include <nlohmann/json.hpp>

#include <map>
#include <string>
#include <string_view>

#include "../common.hpp"
#include "text.hpp"

namespace lpvgs::io {

using Json = nlohmann::json;

/// Parse JSON text; comments are allowed.  Errors carry line and column.
inline Json parse_json(std::string_view text)
{
  try {
    return Json::parse(text.begin(), text.end(), nullptr, true, true);
  } catch (const Json::parse_error & e) {
    std::size_t line = 1, col = 1;
    const std::size_t stop = std::min<std::size_t>(e.byte > 0 ? e.byte - 1 : 0, text.size());
    for (std::size_t i = 0; i < stop; ++i) {
      if (text[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    std::string what = e.what();
    const auto pos   = what.rfind(": ");
    throw ParseError("invalid JSON (" + (pos == std::string::npos ? what : what.substr(pos + 2)) + ")", line, col);
  }
}

inline Json number_to_json(double v)
{
  if (std::isfinite(v)) { return v; }
  return format_double(v);
}

inline double number_from_json(const Json & j, const std::string & where)
{
  if (j.is_number()) { return j.get<double>(); }
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "inf" || s == "-inf" || s == "nan") { return parse_double(s, 0, 0); }
  }
  throw ConfigError(where + ": expected a number");
}

inline Json matrix_to_json(const Matrix & M)
{
  Json data = Json::array();
  for (Index i = 0; i < M.rows(); ++i) {
    for (Index j = 0; j < M.cols(); ++j) { data.push_back(number_to_json(M(i, j))); }
  }
  return Json{{"rows", M.rows()}, {"cols", M.cols()}, {"data", std::move(data)}};
}

inline Matrix matrix_from_json(const Json & j, const std::string & name)
{
  if (!j.is_object() || !j.contains("rows") || !j.contains("cols") || !j.contains("data")) {
    throw ConfigError("matrix '" + name + "' needs rows, cols and data");
  }
  const auto rows  = j.at("rows").get<Index>();
  const auto cols  = j.at("cols").get<Index>();
  const Json & d   = j.at("data");
  if (rows < 0 || cols < 0 || !d.is_array() || static_cast<Index>(d.size()) != rows * cols) {
    throw ConfigError("matrix '" + name + "': data length does not match rows * cols");
  }
  Matrix M(rows, cols);
  std::size_t k = 0;
  for (Index i = 0; i < rows; ++i) {
    for (Index c = 0; c < cols; ++c) { M(i, c) = number_from_json(d[k++], "matrix '" + name + "'"); }
  }
  return M;
}

inline Json vector_to_json(const Vector & v)
{
  Json a = Json::array();
  for (Index i = 0; i < v.size(); ++i) { a.push_back(number_to_json(v(i))); }
  return a;
}

inline Vector vector_from_json(const Json & j, const std::string & name)
{
  if (!j.is_array()) { throw ConfigError("'" + name + "' must be an array of numbers"); }
  Vector v(static_cast<Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) { v(static_cast<Index>(i)) = number_from_json(j[i], name); }
  return v;
}

struct Bundle
{
  std::map<std::string, Matrix> matrices;
  Json meta = Json::object();

  const Matrix & at(const std::string & name) const
  {
    const auto it = matrices.find(name);
    if (it == matrices.end()) { throw ConfigError("bundle has no matrix '" + name + "'"); }
    return it->second;
  }
};

inline std::string bundle_to_string(const Bundle & b)
{
  Json mats = Json::object();
  for (const auto & [name, M] : b.matrices) { mats[name] = matrix_to_json(M); }
  const Json doc{{"format", "lpvgs-bundle"}, {"version", 1}, {"matrices", std::move(mats)}, {"meta", b.meta}};
  return doc.dump(1) + "\n";
}

inline Bundle bundle_from_string(std::string_view text)
{
  const Json doc = parse_json(text);
  if (!doc.is_object() || doc.value("format", "") != "lpvgs-bundle") {
    throw ParseError("not an lpvgs bundle (missing format tag)", 1, 1);
  }
  Bundle b;
  if (doc.contains("matrices")) {
    for (const auto & [name, m] : doc.at("matrices").items()) { b.matrices[name] = matrix_from_json(m, name); }
  }
  if (doc.contains("meta")) { b.meta = doc.at("meta"); }
  return b;
}

}  // namespace lpvgs::io
