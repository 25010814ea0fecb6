#pragma once

#include <filesystem>
#include <string>

#include "csv.hpp"
#include "json_bundle.hpp"
#include "matrix_market.hpp"
#include "text.hpp"

namespace lpvgs::io {

enum class FileFormat { matrix_market, csv, json_bundle };

inline std::string to_string(FileFormat f)
{
  switch (f) {
  case FileFormat::matrix_market: return "matrix-market";
  case FileFormat::csv: return "csv";
  case FileFormat::json_bundle: return "json-bundle";
  }
  return "?";
}

inline FileFormat file_format_from_string(const std::string & s)
{
  if (s == "matrix-market" || s == "mtx") { return FileFormat::matrix_market; }
  if (s == "csv") { return FileFormat::csv; }
  if (s == "json-bundle" || s == "json") { return FileFormat::json_bundle; }
  throw ConfigError("unknown file format '" + s + "' (expected matrix-market, csv or json-bundle)");
}

inline FileFormat file_format_from_path(const std::string & path)
{
  const auto ext = std::filesystem::path(path).extension().string();
  if (ext == ".mtx" || ext == ".mm") { return FileFormat::matrix_market; }
  if (ext == ".csv") { return FileFormat::csv; }
  if (ext == ".json") { return FileFormat::json_bundle; }
  throw ConfigError("cannot infer the format of '" + path + "'; pass it explicitly");
}

inline Bundle read_matrices(const std::string & path, FileFormat fmt, const std::string & name = "matrix")
{
  const std::string text = read_file(path);
  if (fmt == FileFormat::json_bundle) { return bundle_from_string(text); }
  Bundle b;
  b.matrices[name] = fmt == FileFormat::csv ? matrix_from_csv(text) : from_matrix_market(text);
  return b;
}

/**
 * @brief Write a bundle in the requested format.
 *
 * Single-matrix formats take `entry` when given, otherwise the only matrix.
 */
inline void write_matrices(const std::string & path, FileFormat fmt, const Bundle & b, const std::string & entry = "")
{
  if (fmt == FileFormat::json_bundle) {
    if (entry.empty()) {
      write_file(path, bundle_to_string(b));
    } else {
      Bundle one;
      one.matrices[entry] = b.at(entry);
      write_file(path, bundle_to_string(one));
    }
    return;
  }
  const Matrix * M = nullptr;
  if (!entry.empty()) {
    M = &b.at(entry);
  } else if (b.matrices.size() == 1) {
    M = &b.matrices.begin()->second;
  } else {
    throw ConfigError("input holds " + std::to_string(b.matrices.size()) +
                      " matrices; choose one with an entry name");
  }
  write_file(path, fmt == FileFormat::csv ? matrix_to_csv(*M) : to_matrix_market(*M));
}

/// Lossless conversion between matrix file formats.
inline void convert(const std::string & in, FileFormat fmt_in, const std::string & out, FileFormat fmt_out,
                    const std::string & entry = "")
{
  const Bundle b = read_matrices(in, fmt_in, entry.empty() ? "matrix" : entry);
  write_matrices(out, fmt_out, b, fmt_in == FileFormat::json_bundle ? entry : "");
}

}  // namespace lpvgs::io
