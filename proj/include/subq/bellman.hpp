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

// Adapted Bellman operators on mean-field tables of a k-agent sample.
//
//   exact:      (T_k Q)(s_g, F, a)   = r_F(s_g, a) + gamma * E[max_a' Q(s_g', F', a')]
//   empirical:  (T_km Q)(s_g, F, a)  = r_F(s_g, a) + gamma/m * sum_j max_a' Q(s_g^j, F^j, a')
//
// where s_g' ~ P_g(.|s_g, a) and each of the k sampled agents moves
// independently by P_l(.|x, s_g). Both operators are synchronous sweeps: the
// input table is read-only and every output entry is computed from it.

#ifndef SUBQ_BELLMAN_HPP_
#define SUBQ_BELLMAN_HPP_

#include <algorithm>
#include <array>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "subq/env_model.hpp"
#include "subq/errors.hpp"
#include "subq/lattice.hpp"
#include "subq/q_table.hpp"
#include "subq/rng.hpp"

namespace subq {

// Lattice size ceiling for the exact operator, per (s_g, a).
inline constexpr std::uint64_t kDefaultLawLatticeBudget = 2'000'000;
// Ceiling on the total number of stored law entries of an ExactAdaptedOperator.
inline constexpr std::uint64_t kDefaultLawEntryBudget = 40'000'000;

// Exact law of the next count vector, as sparse (rank, probability) pairs over
// the lattice of size k.
struct NextDistLaw {
  std::vector<std::pair<DistIndex, double>> entries;

  double total_mass() const noexcept {
    double s = 0.0;
    for (const auto& e : entries) s += e.second;
    return s;
  }
};

namespace detail {

// Agent-by-agent convolution over growing lattices. `sources[i]` is the current
// state of the i-th sampled agent, `targeted[i]` selects the targeted kernel.
class LawConvolver {
 public:
  LawConvolver(const EnvModel& env, std::uint32_t k) : env_(env), k_(k) {
    lattices_.reserve(k);
    for (std::uint32_t t = 1; t <= k; ++t) lattices_.emplace_back(t, env.num_local_states());
  }

  // Adds weight * law(agents) into `out` (dense over the size-k lattice).
  void accumulate(GlobalState s_g, std::span<const std::pair<LocalState, bool>> agents, double weight,
                  std::vector<double>& out) {
    const std::size_t L = env_.num_local_states();
    std::vector<double> cur, nxt;
    std::vector<std::uint32_t> counts(L, 0);
    // Stage 1: point masses.
    cur.assign(lattices_[0].size(), 0.0);
    {
      const auto row = row_of(agents[0], s_g);
      for (std::size_t y = 0; y < L; ++y) cur[y] += row[y];  // rank of e_y at t=1 is y
    }
    for (std::size_t t = 1; t < agents.size(); ++t) {
      const auto& from = lattices_[t - 1];
      const auto& to = lattices_[t];
      nxt.assign(to.size(), 0.0);
      const auto row = row_of(agents[t], s_g);
      for (DistIndex i = 0; i < from.size(); ++i) {
        const double p = cur[i];
        if (p == 0.0) continue;
        from.unrank_into(i, counts);
        for (std::size_t y = 0; y < L; ++y) {
          if (row[y] == 0.0) continue;
          ++counts[y];
          nxt[to.rank_counts(counts)] += p * row[y];
          --counts[y];
        }
      }
      cur.swap(nxt);
    }
    for (DistIndex i = 0; i < cur.size(); ++i) out[i] += weight * cur[i];
  }

 private:
  std::span<const double> row_of(std::pair<LocalState, bool> agent, GlobalState s_g) const {
    return agent.second ? env_.targeted_row(agent.first, s_g) : env_.local_row(agent.first, s_g);
  }

  const EnvModel& env_;
  std::uint32_t k_;
  std::vector<CompositionLattice> lattices_;
};

inline void check_law_budget(std::uint64_t lattice, std::uint64_t budget) {
  if (lattice > budget) {
    throw CapacityError("exact next-distribution law needs a lattice of " + std::to_string(lattice) +
                        " entries (budget " + std::to_string(budget) +
                        "); use the sampled operator instead");
  }
}

inline NextDistLaw law_from_counts(const EnvModel& env, GlobalState s_g, std::span<const std::uint32_t> counts,
                                   std::uint32_t k, LawConvolver& conv, std::uint64_t lattice_size) {
  std::vector<std::pair<LocalState, bool>> agents;
  agents.reserve(k);
  for (LocalState x = 0; x < counts.size(); ++x) {
    for (std::uint32_t c = 0; c < counts[x]; ++c) agents.emplace_back(x, false);
  }
  std::vector<double> dense(lattice_size, 0.0);
  const double q = env.target_in_sample_prob(s_g, k);
  conv.accumulate(s_g, agents, 1.0 - q, dense);
  if (q > 0.0) {
    // The targeted agent is a uniformly chosen member of the sample: it sits in
    // state x with probability counts[x] / k. Put it last in the agent list.
    for (LocalState x = 0; x < counts.size(); ++x) {
      if (counts[x] == 0) continue;
      std::vector<std::pair<LocalState, bool>> tagged;
      tagged.reserve(k);
      for (LocalState y = 0; y < counts.size(); ++y) {
        const std::uint32_t c = counts[y] - (y == x ? 1 : 0);
        for (std::uint32_t j = 0; j < c; ++j) tagged.emplace_back(y, false);
      }
      tagged.emplace_back(x, true);
      conv.accumulate(s_g, tagged, q * counts[x] / k, dense);
    }
  }
  NextDistLaw law;
  for (DistIndex i = 0; i < dense.size(); ++i) {
    if (dense[i] != 0.0) law.entries.emplace_back(i, dense[i]);
  }
  return law;
}

}  // namespace detail

// Exact law of F' given (s_g, F).
inline NextDistLaw next_dist_law(const EnvModel& env, GlobalState s_g, const EmpiricalDist& d,
                                 std::uint64_t lattice_budget = kDefaultLawLatticeBudget) {
  if (s_g >= env.num_global_states()) throw RangeError("global state out of range");
  if (d.num_states() != env.num_local_states()) throw DimensionError("distribution has wrong number of states");
  const std::uint64_t size = lattice_size(d.k(), d.num_states());
  detail::check_law_budget(size, lattice_budget);
  detail::LawConvolver conv(env, d.k());
  return detail::law_from_counts(env, s_g, d.counts(), d.k(), conv, size);
}

// max_a Q(s_g, d, a) for every (s_g, d).
inline std::vector<double> max_backup(const MeanFieldQTable& q) {
  const std::size_t rows = static_cast<std::size_t>(q.num_global_states()) * q.num_dists();
  const std::size_t A = q.num_actions();
  std::vector<double> v(rows);
  const auto vals = q.values();
  for (std::size_t r = 0; r < rows; ++r) {
    double best = vals[r * A];
    for (std::size_t a = 1; a < A; ++a) best = std::max(best, vals[r * A + a]);
    v[r] = best;
  }
  return v;
}

// Surrogate rewards r_F(s_g, a) laid out like a table of support size k.
inline MeanFieldQTable surrogate_reward_table(const EnvModel& env, std::uint32_t k,
                                              std::uint64_t entry_budget = kDefaultTableEntryBudget) {
  MeanFieldQTable r(env, k, entry_budget);
  const auto& lat = r.lattice();
  std::vector<std::uint32_t> counts(env.num_local_states());
  for (DistIndex d = 0; d < lat.size(); ++d) {
    lat.unrank_into(d, counts);
    for (GlobalState s = 0; s < env.num_global_states(); ++s) {
      double local = 0.0;
      for (LocalState x = 0; x < counts.size(); ++x) {
        if (counts[x] != 0) local += counts[x] * env.reward_local(x, s);
      }
      local /= k;
      for (Action a = 0; a < env.num_actions(); ++a) r.at(s, d, a) = env.reward_global(s, a) + local;
    }
  }
  return r;
}

// T_k with every next-distribution law precomputed once.
class ExactAdaptedOperator {
 public:
  ExactAdaptedOperator(const EnvModel& env, std::uint32_t k,
                       std::uint64_t lattice_budget = kDefaultLawLatticeBudget,
                       std::uint64_t entry_budget = kDefaultLawEntryBudget)
      : env_(env), rewards_(surrogate_reward_table(env, k)) {
    const auto& lat = rewards_.lattice();
    detail::check_law_budget(lat.size(), lattice_budget);
    const std::size_t G = env.num_global_states();
    detail::LawConvolver conv(env, k);
    std::vector<std::uint32_t> counts(env.num_local_states());
    offsets_.reserve(G * lat.size() + 1);
    offsets_.push_back(0);
    for (GlobalState s = 0; s < G; ++s) {
      for (DistIndex d = 0; d < lat.size(); ++d) {
        lat.unrank_into(d, counts);
        auto law = detail::law_from_counts(env, s, counts, k, conv, lat.size());
        if (entries_.size() + law.entries.size() > entry_budget) {
          throw CapacityError("exact operator needs more than " + std::to_string(entry_budget) +
                              " law entries; use the sampled operator instead");
        }
        entries_.insert(entries_.end(), law.entries.begin(), law.entries.end());
        offsets_.push_back(entries_.size());
      }
    }
  }

  std::uint32_t k() const noexcept { return rewards_.k(); }
  const EnvModel& env() const noexcept { return env_; }
  const MeanFieldQTable& rewards() const noexcept { return rewards_; }

  std::span<const std::pair<DistIndex, double>> law(GlobalState s_g, DistIndex d) const noexcept {
    const std::size_t r = static_cast<std::size_t>(s_g) * rewards_.num_dists() + d;
    return std::span(entries_).subspan(offsets_[r], offsets_[r + 1] - offsets_[r]);
  }

  MeanFieldQTable apply(const MeanFieldQTable& q) const {
    if (!q.same_shape(rewards_)) throw DimensionError("exact operator: table shape mismatch");
    const std::size_t G = env_.num_global_states(), A = env_.num_actions();
    const std::uint64_t D = rewards_.num_dists();
    const auto v = max_backup(q);
    const double gamma = env_.gamma();
    MeanFieldQTable out = rewards_;
    std::vector<double> w(G);
    for (GlobalState s = 0; s < G; ++s) {
      for (DistIndex d = 0; d < D; ++d) {
        // w[s'] = E_{F'}[max_a' Q(s', F', a')]
        std::fill(w.begin(), w.end(), 0.0);
        for (const auto& [next, p] : law(s, d)) {
          for (GlobalState sn = 0; sn < G; ++sn) w[sn] += p * v[sn * D + next];
        }
        for (Action a = 0; a < A; ++a) {
          const auto row = env_.global_row(s, a);
          double cont = 0.0;
          for (GlobalState sn = 0; sn < G; ++sn) {
            if (row[sn] != 0.0) cont += row[sn] * w[sn];
          }
          out.at(s, d, a) += gamma * cont;
        }
      }
    }
    return out;
  }

 private:
  const EnvModel& env_;
  MeanFieldQTable rewards_;
  std::vector<std::size_t> offsets_;
  std::vector<std::pair<DistIndex, double>> entries_;
};

inline MeanFieldQTable exact_adapted_bellman(const EnvModel& env, const MeanFieldQTable& q) {
  if (q.fingerprint() != env.fingerprint()) throw DimensionError("table was built for a different model");
  return ExactAdaptedOperator(env, q.k()).apply(q);
}

// T_{k,m}: every (s_g, F, a) entry draws m fresh joint samples of
// (s_g', F'). The stream of entry e in a sweep keyed by `sweep_seed` is
// SeededRng::derive(sweep_seed, {e}), so results do not depend on the order in
// which entries are visited.
class EmpiricalAdaptedOperator {
 public:
  EmpiricalAdaptedOperator(const EnvModel& env, std::uint32_t k, std::uint32_t m,
                           std::uint64_t entry_budget = kDefaultTableEntryBudget)
      : env_(env), m_(m), rewards_(surrogate_reward_table(env, k, entry_budget)) {
    if (m == 0) throw InvalidParameterError("sample count m must be >= 1");
  }

  std::uint32_t k() const noexcept { return rewards_.k(); }
  std::uint32_t m() const noexcept { return m_; }
  const MeanFieldQTable& rewards() const noexcept { return rewards_; }

  // One sweep; draws the sweep key from `rng`.
  MeanFieldQTable apply(const MeanFieldQTable& q, SeededRng& rng) const {
    return apply_keyed(q, rng.next());
  }

  MeanFieldQTable apply_keyed(const MeanFieldQTable& q, std::uint64_t sweep_seed) const {
    if (!q.same_shape(rewards_)) throw DimensionError("empirical operator: table shape mismatch");
    const auto v = max_backup(q);
    MeanFieldQTable out = rewards_;
    switch (k()) {
      case 1: sweep<1>(v, sweep_seed, out); break;
      case 2: sweep<2>(v, sweep_seed, out); break;
      case 3: sweep<3>(v, sweep_seed, out); break;
      case 4: sweep<4>(v, sweep_seed, out); break;
      case 5: sweep<5>(v, sweep_seed, out); break;
      case 6: sweep<6>(v, sweep_seed, out); break;
      case 7: sweep<7>(v, sweep_seed, out); break;
      case 8: sweep<8>(v, sweep_seed, out); break;
      default: sweep<0>(v, sweep_seed, out); break;
    }
    return out;
  }

 private:
  static constexpr std::uint32_t kSortLimit = 24;

  // K > 0 fixes the sample size at compile time so that the sorting network
  // unrolls; K = 0 reads it from the lattice.
  template <std::uint32_t K>
  void sweep(const std::vector<double>& v, std::uint64_t sweep_seed, MeanFieldQTable& out) const {
    const std::size_t G = env_.num_global_states(), A = env_.num_actions(), L = env_.num_local_states();
    const auto& lat = rewards_.lattice();
    const std::uint64_t D = lat.size();
    const std::uint32_t k = K > 0 ? K : lat.k();
    const double gamma = env_.gamma();
    std::vector<std::uint32_t> counts(L), next_counts(L);
    std::vector<LocalState> agents(k);
    std::vector<RowSamplers::Row> rows(k), targeted_rows(k);
    std::array<LocalState, (K > 0 ? K : kSortLimit)> next{};
    const bool sort_path = K > 0 || k <= kSortLimit;
    for (GlobalState s = 0; s < G; ++s) {
      const double q_target = env_.target_in_sample_prob(s, k);
      for (DistIndex d = 0; d < D; ++d) {
        lat.unrank_into(d, counts);
        std::size_t pos = 0;
        for (LocalState x = 0; x < L; ++x) {
          for (std::uint32_t c = 0; c < counts[x]; ++c) agents[pos++] = x;
        }
        for (std::uint32_t i = 0; i < k; ++i) {
          rows[i] = env_.local_sampler(agents[i], s);
          if (q_target > 0.0) targeted_rows[i] = env_.targeted_sampler(agents[i], s);
        }
        for (Action a = 0; a < A; ++a) {
          const std::size_t entry = out.index(s, d, a);
          const auto global_row = env_.global_sampler(s, a);
          SeededRng rng = SeededRng::derive(sweep_seed, {entry});
          double acc = 0.0;
          for (std::uint32_t j = 0; j < m_; ++j) {
            std::int64_t targeted = -1;
            if (q_target > 0.0 && rng.bernoulli(q_target)) {
              targeted = static_cast<std::int64_t>(rng.uniform_index(k));
            }
            const GlobalState sn = global_row.sample(rng);
            DistIndex nd;
            if (sort_path) {
              for (std::uint32_t i = 0; i < k; ++i) next[i] = rows[i].sample(rng);
              if (targeted >= 0) next[targeted] = targeted_rows[targeted].sample(rng);
              // Odd-even transposition network; min/max compile to
              // conditional moves.
              for (std::uint32_t pass = 0; pass < k; ++pass) {
                for (std::uint32_t i = pass & 1u; i + 1 < k; i += 2) {
                  const LocalState lo = std::min(next[i], next[i + 1]), hi = std::max(next[i], next[i + 1]);
                  next[i] = lo;
                  next[i + 1] = hi;
                }
              }
              nd = lat.rank_sorted(std::span<const LocalState>(next.data(), k));
            } else {
              std::fill(next_counts.begin(), next_counts.end(), 0u);
              for (std::uint32_t i = 0; i < k; ++i) {
                ++next_counts[static_cast<std::int64_t>(i) == targeted ? targeted_rows[i].sample(rng)
                                                                        : rows[i].sample(rng)];
              }
              nd = lat.rank_counts(next_counts);
            }
            acc += v[sn * D + nd];
          }
          out.values()[entry] += gamma * acc / m_;
        }
      }
    }
  }

  const EnvModel& env_;
  std::uint32_t m_;
  MeanFieldQTable rewards_;
};

inline MeanFieldQTable empirical_adapted_bellman(const EnvModel& env, const MeanFieldQTable& q, std::uint32_t m,
                                                 SeededRng& rng) {
  if (q.fingerprint() != env.fingerprint()) throw DimensionError("table was built for a different model");
  return EmpiricalAdaptedOperator(env, q.k(), m).apply(q, rng);
}

}  // namespace subq

#endif  // SUBQ_BELLMAN_HPP_
