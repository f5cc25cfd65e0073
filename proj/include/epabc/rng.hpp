// Copyright 2026 The epabc authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef EPABC_RNG_HPP
#define EPABC_RNG_HPP

#include <bit>
#include <cmath>
#include <cstdint>
#include <initializer_list>

#include "epabc/normal.hpp"

namespace epabc {

/// SplitMix64 step: advances `state` and returns the next output.
/// Reference algorithm by Steele, Lea and Flood; used both as a standalone
/// mixer and to expand seeds for xoshiro256++.
inline std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9E3779B97F4A7C15ULL;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// Stateless 64-bit finalizer (the SplitMix64 output function). Bijective.
inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// Order-dependent combination of 64-bit key components into one seed word.
/// Used to derive independent, reproducible streams from structured keys such
/// as (seed, pass, site) or (seed, site, theta bits, draw index).
inline std::uint64_t hash_key(std::initializer_list<std::uint64_t> parts) {
  std::uint64_t h = 0x9E3779B97F4A7C15ULL;
  for (std::uint64_t part : parts) {
    h = mix64(h ^ (part + 0x9E3779B97F4A7C15ULL + (h << 6) + (h >> 2)));
  }
  return h;
}

/// Reinterpret a double's bits as an integer key component (exact, including
/// the sign of zero), so real-valued inputs can enter hash_key.
inline std::uint64_t double_key(double x) {
  return std::bit_cast<std::uint64_t>(x);
}

/// xoshiro256++ generator (Blackman & Vigna). State seeded via SplitMix64 so
/// any 64-bit seed, including 0, yields a valid nonzero state.
class Xoshiro256 {
 public:
  explicit Xoshiro256(std::uint64_t seed) {
    std::uint64_t sm = seed;
    for (auto& word : s_) word = splitmix64(sm);
  }

  std::uint64_t next() {
    const std::uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  /// Uniform draw strictly inside (0, 1): ((x >> 11) + 0.5) * 2^-53.
  /// Safe as input to logarithms and normal_quantile.
  double uniform() {
    return (static_cast<double>(next() >> 11) + 0.5) * 0x1.0p-53;
  }

  /// Standard normal draw via the inverse-CDF transform.
  double normal() { return normal_quantile(uniform()); }

  /// Standard exponential draw.
  double exponential() { return -std::log(uniform()); }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
  }
  std::uint64_t s_[4];
};

}  // namespace epabc

#endif  // EPABC_RNG_HPP
