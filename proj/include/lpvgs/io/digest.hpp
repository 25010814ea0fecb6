#pragma once

#include <openssl/evp.h>

#include <cstdio>
#include <string>
#include <string_view>

#include "../errors.hpp"
#include "text.hpp"

namespace lpvgs::io {

/// Lowercase hex SHA-256 of a byte string.
inline std::string sha256_hex(std::string_view data)
{
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1) {
    throw IoError("SHA-256 computation failed");
  }
  std::string hex;
  hex.reserve(2 * len);
  char buf[3];
  for (unsigned int i = 0; i < len; ++i) {
    std::snprintf(buf, sizeof(buf), "%02x", md[i]);
    hex += buf;
  }
  return hex;
}

inline std::string sha256_file(const std::string & path) { return sha256_hex(read_file(path)); }

}  // namespace lpvgs::io
