// Copyright 2026 The egonav Authors
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

// Named random streams. Every random draw in the simulator comes from a
// stream keyed by (master_seed, purpose, a, b), so runs are reproducible and
// independent of the order in which workers are scheduled.

#ifndef EGONAV_RNG_HPP_
#define EGONAV_RNG_HPP_

#include <cstdint>
#include <random>
#include <string_view>

namespace egonav {

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

// 64-bit FNV-1a.
inline std::uint64_t fnv1a(std::string_view s,
                           std::uint64_t h = 0xCBF29CE484222325ull) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001B3ull;
  }
  return h;
}

inline Rng make_stream(std::uint64_t master_seed, std::string_view purpose,
                       std::uint64_t a = 0, std::uint64_t b = 0) {
  std::uint64_t h = splitmix64(master_seed ^ fnv1a(purpose));
  h = splitmix64(h ^ splitmix64(a + 0x51ED2701ull));
  h = splitmix64(h ^ splitmix64(b + 0xA24BAED4ull));
  return Rng(h);
}

inline double standard_normal(Rng& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  return n(rng);
}

inline double uniform(Rng& rng, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  return u(rng);
}

}  // namespace egonav

#endif  // EGONAV_RNG_HPP_
