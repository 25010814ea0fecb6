#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>

#include "errors.hpp"

namespace lpvgs {

using Index  = Eigen::Index;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

inline void require_dim(bool ok, const std::string & what)
{
  if (!ok) { throw DimensionError(what); }
}

/// splitmix64 finalizer, used to derive independent seeds.
inline std::uint64_t mix64(std::uint64_t z)
{
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Seed for a labelled sub-stream of `master`; stable across platforms.
inline std::uint64_t derive_seed(std::uint64_t master, std::string_view label)
{
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : label) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return mix64(master ^ h);
}

/// Uniform double in [0, 1) from 53 random bits (portable, unlike std::uniform_real_distribution).
template<typename Rng>
double uniform01(Rng & rng)
{
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

/// Standard normal via Box-Muller on uniform01 (portable).
template<typename Rng>
double standard_normal(Rng & rng)
{
  double u1 = uniform01(rng);
  while (u1 <= 0.0) { u1 = uniform01(rng); }
  const double u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
}

}  // namespace lpvgs
