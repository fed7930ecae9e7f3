// Copyright 2026 The subq Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef SUBQ_RNG_HPP_
#define SUBQ_RNG_HPP_

#include <cstdint>
#include <initializer_list>
#include <limits>

namespace subq {

// Mixes a 64-bit word (the SplitMix64 finalizer).
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Deterministic, splittable pseudo-random stream (SplitMix64).
//
// Every draw used by the library goes through this type, and the helpers below
// avoid the implementation-defined std:: distributions, so a seed produces the
// same numbers with every compiler and standard library. Satisfies
// UniformRandomBitGenerator for interop with <algorithm>.
class SeededRng {
 public:
  using result_type = std::uint64_t;

  explicit SeededRng(std::uint64_t seed = 0) noexcept : state_(seed) {}

  // Counter-style derivation: a stream keyed by `seed` and a tuple of ids.
  // Used to give every (sweep, table entry) its own stream so that results do
  // not depend on iteration order or worker partitioning.
  static SeededRng derive(std::uint64_t seed,
                          std::initializer_list<std::uint64_t> keys) noexcept {
    std::uint64_t h = mix64(seed ^ 0x5851f42d4c957f2dULL);
    for (std::uint64_t key : keys) h = mix64(h ^ mix64(key + 0x9e3779b97f4a7c15ULL));
    return SeededRng(h);
  }

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept {
    return std::numeric_limits<result_type>::max();
  }

  result_type operator()() noexcept { return next(); }

  std::uint64_t next() noexcept {
    state_ += 0x9e3779b97f4a7c15ULL;
    return mix64(state_);
  }

  // Child stream; advances this stream by one draw.
  SeededRng split() noexcept { return SeededRng(mix64(next() ^ 0xd1b54a32d192ed03ULL)); }

  // Uniform double in [0, 1) with 53 bits of resolution.
  double uniform01() noexcept {
    return static_cast<double>(next() >> 11) * 0x1.0p-53;
  }

  // Unbiased uniform integer in [0, bound) (Lemire's multiply-and-reject).
  std::uint64_t uniform_index(std::uint64_t bound) noexcept {
    if (bound <= 1) return 0;
    unsigned __int128 m = static_cast<unsigned __int128>(next()) * bound;
    auto low = static_cast<std::uint64_t>(m);
    if (low < bound) {
      const std::uint64_t threshold = (0 - bound) % bound;
      while (low < threshold) {
        m = static_cast<unsigned __int128>(next()) * bound;
        low = static_cast<std::uint64_t>(m);
      }
    }
    return static_cast<std::uint64_t>(m >> 64);
  }

  bool bernoulli(double p) noexcept { return uniform01() < p; }

  std::uint64_t state() const noexcept { return state_; }

 private:
  std::uint64_t state_;
};

}  // namespace subq

#endif  // SUBQ_RNG_HPP_
