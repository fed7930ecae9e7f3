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

// Empirical distributions over local states and the composition lattice that
// indexes them.
//
// An empirical distribution of k sampled agents over L local states is stored
// as an integer count vector summing to k. The set of such vectors (the
// composition lattice, stars-and-bars) has C(k+L-1, L-1) elements. Each count
// vector is identified with the multiset of sampled states y_1 <= ... <= y_k,
// which maps to the strictly increasing combination z_i = y_i + (i-1) drawn
// from [0, k+L-1). The rank is the combinatorial-number-system index
// sum_i C(z_i, i), a perfect hash into [0, C(k+L-1, k)).

#ifndef SUBQ_LATTICE_HPP_
#define SUBQ_LATTICE_HPP_

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "subq/errors.hpp"
#include "subq/rng.hpp"

namespace subq {

using LocalState = std::uint32_t;
using DistIndex = std::uint64_t;

inline constexpr std::uint64_t kSaturated = std::numeric_limits<std::uint64_t>::max();

// C(n, r) in 64 bits, saturating at kSaturated on overflow.
inline std::uint64_t binomial(std::uint64_t n, std::uint64_t r) noexcept {
  if (r > n) return 0;
  r = std::min(r, n - r);
  unsigned __int128 acc = 1;
  for (std::uint64_t i = 1; i <= r; ++i) {
    acc = acc * (n - r + i) / i;
    if (acc > kSaturated) return kSaturated;
  }
  return static_cast<std::uint64_t>(acc);
}

// C(n, r) as a double, exact while the value stays below 2^53.
inline double binomial_real(int n, int r) noexcept {
  if (r < 0 || r > n) return 0.0;
  r = std::min(r, n - r);
  double acc = 1.0;
  for (int i = 1; i <= r; ++i) acc = acc * (n - r + i) / i;
  return acc < 0x1.0p53 ? std::round(acc) : acc;
}

// Number of count vectors over `num_states` states summing to `k`.
inline std::uint64_t lattice_size(std::uint64_t k, std::uint64_t num_states) noexcept {
  if (num_states == 0) return 0;
  return binomial(k + num_states - 1, num_states - 1);
}

// F_{s_Delta}: counts of sampled agents per local state. sum(counts) == k.
class EmpiricalDist {
 public:
  EmpiricalDist() = default;

  explicit EmpiricalDist(std::vector<std::uint32_t> counts) : counts_(std::move(counts)) {
    if (counts_.empty()) throw DimensionError("empirical distribution needs at least one state");
    std::uint64_t total = 0;
    for (auto c : counts_) total += c;
    if (total == 0) throw InvalidParameterError("empirical distribution needs k >= 1");
    k_ = static_cast<std::uint32_t>(total);
  }

  // Point mass of k agents at `state`.
  static EmpiricalDist point_mass(std::size_t num_states, LocalState state, std::uint32_t k) {
    if (state >= num_states) throw RangeError("point mass state out of range");
    std::vector<std::uint32_t> counts(num_states, 0);
    counts[state] = k;
    return EmpiricalDist(std::move(counts));
  }

  std::uint32_t k() const noexcept { return k_; }
  std::size_t num_states() const noexcept { return counts_.size(); }
  std::uint32_t count(LocalState x) const { return counts_.at(x); }
  std::span<const std::uint32_t> counts() const noexcept { return counts_; }

  // F(x) = counts[x] / k.
  double frequency(LocalState x) const { return static_cast<double>(counts_.at(x)) / k_; }

  std::vector<double> probabilities() const {
    std::vector<double> p(counts_.size());
    for (std::size_t x = 0; x < counts_.size(); ++x) p[x] = static_cast<double>(counts_[x]) / k_;
    return p;
  }

  friend bool operator==(const EmpiricalDist&, const EmpiricalDist&) = default;

 private:
  std::vector<std::uint32_t> counts_;
  std::uint32_t k_ = 0;
};

// Perfect index over all count vectors of size k on `num_states` states.
class CompositionLattice {
 public:
  CompositionLattice(std::uint32_t k, std::uint32_t num_states) : k_(k), num_states_(num_states) {
    if (k == 0) throw InvalidParameterError("lattice needs k >= 1");
    if (num_states == 0) throw InvalidParameterError("lattice needs at least one local state");
    size_ = lattice_size(k, num_states);
    if (size_ == kSaturated) {
      throw CapacityError("composition lattice C(" + std::to_string(k + num_states - 1) + ", " +
                          std::to_string(num_states - 1) + ") overflows 64 bits");
    }
    top_ = k + num_states - 1;
    // binom_[z * (k+1) + i] = C(z, i) for z < top_, i <= k; all fit since
    // C(z, i) <= C(top_-1, i) <= size_ for the entries we read.
    binom_.assign(static_cast<std::size_t>(top_) * (k + 1), 0);
    for (std::uint32_t z = 0; z < top_; ++z) {
      for (std::uint32_t i = 0; i <= k; ++i) binom_[z * (k + 1) + i] = binomial(z, i);
    }
  }

  std::uint32_t k() const noexcept { return k_; }
  std::uint32_t num_states() const noexcept { return num_states_; }
  std::uint64_t size() const noexcept { return size_; }

  DistIndex rank(const EmpiricalDist& d) const {
    if (d.num_states() != num_states_) throw DimensionError("rank: distribution has wrong number of states");
    if (d.k() != k_) throw DimensionError("rank: distribution has wrong support size");
    return rank_counts(d.counts());
  }

  // Rank of a count vector already known to match this lattice.
  DistIndex rank_counts(std::span<const std::uint32_t> counts) const noexcept {
    DistIndex r = 0;
    std::uint32_t i = 1;
    for (std::uint32_t x = 0; x < num_states_; ++x) {
      for (std::uint32_t c = 0; c < counts[x]; ++c, ++i) r += c_(x + i - 1, i);
    }
    return r;
  }

  // Rank of a sorted multiset of k local states. O(k).
  DistIndex rank_sorted(std::span<const LocalState> sorted_states) const noexcept {
    DistIndex r = 0;
    for (std::uint32_t i = 1; i <= k_; ++i) r += c_(sorted_states[i - 1] + i - 1, i);
    return r;
  }

  EmpiricalDist unrank(DistIndex idx) const {
    std::vector<std::uint32_t> counts(num_states_, 0);
    unrank_into(idx, counts);
    return EmpiricalDist(std::move(counts));
  }

  void unrank_into(DistIndex idx, std::span<std::uint32_t> counts) const {
    if (idx >= size_) {
      throw RangeError("unrank: index " + std::to_string(idx) + " outside lattice of size " +
                       std::to_string(size_));
    }
    std::fill(counts.begin(), counts.end(), 0u);
    std::int64_t z = static_cast<std::int64_t>(top_) - 1;
    for (std::uint32_t i = k_; i >= 1; --i) {
      while (c_(static_cast<std::uint32_t>(z), i) > idx) --z;
      idx -= c_(static_cast<std::uint32_t>(z), i);
      counts[static_cast<std::uint32_t>(z) - (i - 1)] += 1;
      --z;
    }
  }

 private:
  std::uint64_t c_(std::uint32_t z, std::uint32_t i) const noexcept { return binom_[z * (k_ + 1) + i]; }

  std::uint32_t k_;
  std::uint32_t num_states_;
  std::uint32_t top_ = 0;
  std::uint64_t size_ = 0;
  std::vector<std::uint64_t> binom_;
};

// F_{s_Delta} for the agents listed in `delta`.
inline EmpiricalDist empirical_dist(std::span<const LocalState> s_locals,
                                    std::span<const std::size_t> delta, std::size_t num_states) {
  if (delta.empty()) throw InvalidSubsetError("subset must be non-empty");
  std::vector<std::uint32_t> counts(num_states, 0);
  std::vector<bool> seen(s_locals.size(), false);
  for (std::size_t i : delta) {
    if (i >= s_locals.size()) {
      throw InvalidSubsetError("subset index " + std::to_string(i) + " out of range [0, " +
                               std::to_string(s_locals.size()) + ")");
    }
    if (seen[i]) throw InvalidSubsetError("duplicate subset index " + std::to_string(i));
    seen[i] = true;
    if (s_locals[i] >= num_states) throw RangeError("local state out of range");
    ++counts[s_locals[i]];
  }
  return EmpiricalDist(std::move(counts));
}

// F_{s_[n]}: distribution of the whole population.
inline EmpiricalDist population_dist(std::span<const LocalState> s_locals, std::size_t num_states) {
  std::vector<std::uint32_t> counts(num_states, 0);
  for (LocalState s : s_locals) {
    if (s >= num_states) throw RangeError("local state out of range");
    ++counts[s];
  }
  return EmpiricalDist(std::move(counts));
}

// Total variation distance between two empirical distributions, which may have
// different support sizes.
inline double tv_distance(const EmpiricalDist& a, const EmpiricalDist& b) {
  if (a.num_states() != b.num_states()) throw DimensionError("tv_distance: state-space sizes differ");
  // Exact integer numerator over the common denominator k_a * k_b.
  const std::int64_t ka = a.k(), kb = b.k();
  std::int64_t l1 = 0;
  for (std::size_t x = 0; x < a.num_states(); ++x) {
    const std::int64_t diff = static_cast<std::int64_t>(a.counts()[x]) * kb -
                              static_cast<std::int64_t>(b.counts()[x]) * ka;
    l1 += diff < 0 ? -diff : diff;
  }
  return 0.5 * static_cast<double>(l1) / static_cast<double>(ka * kb);
}

// Uniform k-subset of [0, n) by partial Fisher-Yates. Indices are returned in
// draw order.
inline std::vector<std::size_t> sample_subset(std::size_t n, std::size_t k, SeededRng& rng) {
  if (k == 0 || k > n) {
    throw InvalidParameterError("sample_subset needs 1 <= k <= n (k=" + std::to_string(k) +
                                ", n=" + std::to_string(n) + ")");
  }
  std::vector<std::size_t> pool(n);
  std::iota(pool.begin(), pool.end(), std::size_t{0});
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.uniform_index(n - i));
    std::swap(pool[i], pool[j]);
  }
  pool.resize(k);
  return pool;
}

// Calls f(subset) for every k-subset of [0, n) in lexicographic order.
template <typename F>
void for_each_subset(std::size_t n, std::size_t k, F&& f) {
  if (k == 0 || k > n) throw InvalidParameterError("for_each_subset needs 1 <= k <= n");
  std::vector<std::size_t> idx(k);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  while (true) {
    f(std::span<const std::size_t>(idx));
    std::size_t i = k;
    while (i > 0 && idx[i - 1] == n - k + (i - 1)) --i;
    if (i == 0) return;
    ++idx[i - 1];
    for (std::size_t j = i; j < k; ++j) idx[j] = idx[j - 1] + 1;
  }
}

}  // namespace subq

#endif  // SUBQ_LATTICE_HPP_
