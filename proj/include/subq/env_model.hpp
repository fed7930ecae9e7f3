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

// The global-agent / local-agents model.
//
// One global agent with state s_g in [0, G) picks an action a_g in [0, A).
// Each of n homogeneous local agents holds a state in [0, L). Per step
//   s_g'  ~ P_g(. | s_g, a_g)
//   s_i'  ~ P_l(. | s_i, s_g)       independently for every agent i
//   r(s, a_g) = r_g(s_g, a_g) + (1/n) sum_i r_l(s_i, s_g).
//
// An optional TargetCoupling lets the global state single out one agent by
// index (agent target[s_g] moves by a separate kernel). This is how indexed
// dispatch environments are expressed; mean-field views of a k-agent sample
// treat the target as a uniformly chosen member of the sample with probability
// k/n.

#ifndef SUBQ_ENV_MODEL_HPP_
#define SUBQ_ENV_MODEL_HPP_

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <optional>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "subq/errors.hpp"
#include "subq/lattice.hpp"
#include "subq/rng.hpp"

namespace subq {

using GlobalState = std::uint32_t;
using Action = std::uint32_t;

inline constexpr double kRowSumTolerance = 1e-12;

struct LocalStateSpace {
  std::vector<std::string> labels;

  std::size_t size() const noexcept { return labels.size(); }

  static LocalStateSpace numbered(std::size_t n) {
    LocalStateSpace s;
    s.labels.reserve(n);
    for (std::size_t i = 0; i < n; ++i) s.labels.push_back(std::to_string(i));
    return s;
  }
};

struct GlobalSpaces {
  std::uint32_t n_global_states = 1;
  std::uint32_t n_actions = 1;
  std::uint32_t n_locals = 1;
};

struct JointState {
  GlobalState s_g = 0;
  std::vector<LocalState> s_locals;

  friend bool operator==(const JointState&, const JointState&) = default;
};

struct TargetCoupling {
  // target_agent[s_g] is the index of the singled-out agent, or -1 for none.
  std::vector<std::int32_t> target_agent;
  // Kernel for the singled-out agent, laid out like EnvSpec::local_kernel.
  std::vector<double> kernel;
};

// Raw tables of a model. Layouts (row-major):
//   global_kernel [s_g][a][s_g']   size G*A*G
//   local_kernel  [x][s_g][x']     size L*G*L
//   reward_global [s_g][a]         size G*A
//   reward_local  [x][s_g]         size L*G
struct EnvSpec {
  std::string name = "custom";
  GlobalSpaces spaces;
  LocalStateSpace local_space;
  std::vector<double> global_kernel;
  std::vector<double> local_kernel;
  std::vector<double> reward_global;
  std::vector<double> reward_local;
  std::optional<TargetCoupling> coupling;
  double gamma = 0.9;

  // Rescales every kernel row to sum to one. Only called on explicit request.
  void renormalize() {
    const std::size_t G = spaces.n_global_states, A = spaces.n_actions, L = local_space.size();
    auto fix = [](std::span<double> row) {
      double s = 0.0;
      for (double p : row) s += p;
      if (s > 0.0) for (double& p : row) p /= s;
    };
    for (std::size_t r = 0; r < G * A; ++r) fix(std::span(global_kernel).subspan(r * G, G));
    for (std::size_t r = 0; r < L * G; ++r) fix(std::span(local_kernel).subspan(r * L, L));
    if (coupling) {
      for (std::size_t r = 0; r < L * G; ++r) fix(std::span(coupling->kernel).subspan(r * L, L));
    }
  }
};

// Alias-method samplers over the non-zero entries of a set of kernel rows.
// One 64-bit draw picks a column (high half of draw * width) and decides
// between the column and its alias (low half against a fixed-point
// threshold).
class RowSamplers {
 public:
  struct Entry {
    std::uint64_t threshold;  // accept the column when low < threshold
    std::uint32_t next;
    std::uint32_t alias;
  };

  struct Row {
    const Entry* entries;
    std::uint64_t width;

    std::uint32_t sample(SeededRng& rng) const noexcept {
      const unsigned __int128 m = static_cast<unsigned __int128>(rng.next()) * width;
      const Entry& e = entries[static_cast<std::uint64_t>(m >> 64)];
      return static_cast<std::uint64_t>(m) < e.threshold ? e.next : e.alias;
    }
  };

  RowSamplers() = default;

  RowSamplers(std::span<const double> probs, std::size_t row_len) {
    const std::size_t rows = row_len == 0 ? 0 : probs.size() / row_len;
    offsets_.reserve(rows + 1);
    offsets_.push_back(0);
    std::vector<double> scaled;
    std::vector<std::uint32_t> small, large;
    for (std::size_t r = 0; r < rows; ++r) {
      const std::size_t lo = entries_.size();
      double total = 0.0;
      scaled.clear();
      for (std::size_t j = 0; j < row_len; ++j) {
        const double p = probs[r * row_len + j];
        if (p <= 0.0) continue;
        total += p;
        entries_.push_back({~std::uint64_t{0}, static_cast<std::uint32_t>(j), static_cast<std::uint32_t>(j)});
        scaled.push_back(p);
      }
      const auto nz = static_cast<std::uint32_t>(scaled.size());
      offsets_.push_back(entries_.size());
      // Vose's construction on this row.
      small.clear();
      large.clear();
      for (std::uint32_t i = 0; i < nz; ++i) {
        scaled[i] *= nz / total;
        (scaled[i] < 1.0 ? small : large).push_back(i);
      }
      while (!small.empty() && !large.empty()) {
        const std::uint32_t sm = small.back(), lg = large.back();
        small.pop_back();
        entries_[lo + sm].threshold = to_fixed(scaled[sm]);
        entries_[lo + sm].alias = entries_[lo + lg].next;
        scaled[lg] -= 1.0 - scaled[sm];
        if (scaled[lg] < 1.0) {
          large.pop_back();
          small.push_back(lg);
        }
      }
    }
  }

  Row row(std::size_t r) const noexcept { return {entries_.data() + offsets_[r], offsets_[r + 1] - offsets_[r]}; }
  std::uint32_t sample(std::size_t r, SeededRng& rng) const noexcept { return row(r).sample(rng); }
  std::size_t nonzeros(std::size_t r) const noexcept { return offsets_[r + 1] - offsets_[r]; }

 private:
  // p in [0, 1) scaled to 2^64; values at or above one saturate.
  static std::uint64_t to_fixed(double p) noexcept {
    if (!(p < 1.0)) return ~std::uint64_t{0};
    if (p <= 0.0) return 0;
    return static_cast<std::uint64_t>(std::ldexp(p, 64));
  }

  std::vector<std::size_t> offsets_;
  std::vector<Entry> entries_;
};

namespace detail {

inline std::uint64_t fnv1a(std::uint64_t h, const void* data, std::size_t len) noexcept {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::uint64_t fnv1a(std::uint64_t h, std::span<const double> values) noexcept {
  for (double v : values) {
    const auto bits = std::bit_cast<std::uint64_t>(v == 0.0 ? 0.0 : v);
    h = fnv1a(h, &bits, sizeof bits);
  }
  return h;
}

inline void check_row_stochastic(std::span<const double> probs, std::size_t row_len,
                                 const std::string& name) {
  const std::size_t rows = probs.size() / row_len;
  for (std::size_t r = 0; r < rows; ++r) {
    double s = 0.0;
    for (std::size_t j = 0; j < row_len; ++j) {
      const double p = probs[r * row_len + j];
      if (!(p >= 0.0) || !std::isfinite(p)) {
        throw ValidationError(name + "_nonnegative",
                              "row " + std::to_string(r) + " has entry " + std::to_string(p));
      }
      s += p;
    }
    if (std::abs(s - 1.0) > kRowSumTolerance) {
      throw ValidationError(name + "_row_sum",
                            "row " + std::to_string(r) + " sums to " + std::to_string(s));
    }
  }
}

}  // namespace detail

// Validated, immutable model. Reward bounds r~_g, r~_l are measured by an
// exhaustive scan of the reward tables.
class EnvModel {
 public:
  explicit EnvModel(EnvSpec spec) : spec_(std::move(spec)) {
    validate();
    const std::size_t G = num_global_states(), L = num_local_states();
    for (double r : spec_.reward_global) r_tilde_g_ = std::max(r_tilde_g_, std::abs(r));
    for (double r : spec_.reward_local) r_tilde_l_ = std::max(r_tilde_l_, std::abs(r));
    global_samplers_ = RowSamplers(spec_.global_kernel, G);
    local_samplers_ = RowSamplers(spec_.local_kernel, L);
    if (spec_.coupling) targeted_samplers_ = RowSamplers(spec_.coupling->kernel, L);
    fingerprint_ = compute_fingerprint();
  }

  const EnvSpec& spec() const noexcept { return spec_; }
  const std::string& name() const noexcept { return spec_.name; }

  std::uint32_t num_global_states() const noexcept { return spec_.spaces.n_global_states; }
  std::uint32_t num_actions() const noexcept { return spec_.spaces.n_actions; }
  std::uint32_t num_locals() const noexcept { return spec_.spaces.n_locals; }
  std::uint32_t num_local_states() const noexcept {
    return static_cast<std::uint32_t>(spec_.local_space.size());
  }
  double gamma() const noexcept { return spec_.gamma; }

  double global_prob(GlobalState s, Action a, GlobalState next) const noexcept {
    return spec_.global_kernel[(std::size_t{s} * num_actions() + a) * num_global_states() + next];
  }
  std::span<const double> global_row(GlobalState s, Action a) const noexcept {
    const std::size_t G = num_global_states();
    return std::span(spec_.global_kernel).subspan((std::size_t{s} * num_actions() + a) * G, G);
  }
  double local_prob(LocalState x, GlobalState s_g, LocalState next) const noexcept {
    return spec_.local_kernel[(std::size_t{x} * num_global_states() + s_g) * num_local_states() + next];
  }
  std::span<const double> local_row(LocalState x, GlobalState s_g) const noexcept {
    const std::size_t L = num_local_states();
    return std::span(spec_.local_kernel).subspan((std::size_t{x} * num_global_states() + s_g) * L, L);
  }
  std::span<const double> targeted_row(LocalState x, GlobalState s_g) const noexcept {
    const std::size_t L = num_local_states();
    return std::span(spec_.coupling->kernel).subspan((std::size_t{x} * num_global_states() + s_g) * L, L);
  }

  double reward_global(GlobalState s, Action a) const noexcept {
    return spec_.reward_global[std::size_t{s} * num_actions() + a];
  }
  double reward_local(LocalState x, GlobalState s_g) const noexcept {
    return spec_.reward_local[std::size_t{x} * num_global_states() + s_g];
  }

  double r_tilde_g() const noexcept { return r_tilde_g_; }
  double r_tilde_l() const noexcept { return r_tilde_l_; }
  double r_tilde() const noexcept { return r_tilde_g_ + r_tilde_l_; }
  // r~ / (1 - gamma): sup-norm bound for every Q iterate started from zero.
  double q_bound() const noexcept { return r_tilde() / (1.0 - gamma()); }

  bool has_coupling() const noexcept { return spec_.coupling.has_value(); }
  // Index of the agent singled out in global state s_g, or -1.
  std::int32_t target_agent(GlobalState s_g) const noexcept {
    return spec_.coupling ? spec_.coupling->target_agent[s_g] : -1;
  }
  // Probability that a uniformly random k-subset contains the targeted agent.
  double target_in_sample_prob(GlobalState s_g, std::uint32_t k) const noexcept {
    const std::int32_t t = target_agent(s_g);
    if (t < 0 || static_cast<std::uint32_t>(t) >= num_locals()) return 0.0;
    return static_cast<double>(k) / num_locals();
  }

  GlobalState sample_global(GlobalState s, Action a, SeededRng& rng) const noexcept {
    return global_samplers_.sample(std::size_t{s} * num_actions() + a, rng);
  }
  LocalState sample_local(LocalState x, GlobalState s_g, SeededRng& rng) const noexcept {
    return local_samplers_.sample(std::size_t{x} * num_global_states() + s_g, rng);
  }
  LocalState sample_targeted(LocalState x, GlobalState s_g, SeededRng& rng) const noexcept {
    return targeted_samplers_.sample(std::size_t{x} * num_global_states() + s_g, rng);
  }
  RowSamplers::Row global_sampler(GlobalState s, Action a) const noexcept {
    return global_samplers_.row(std::size_t{s} * num_actions() + a);
  }
  RowSamplers::Row local_sampler(LocalState x, GlobalState s_g) const noexcept {
    return local_samplers_.row(std::size_t{x} * num_global_states() + s_g);
  }
  RowSamplers::Row targeted_sampler(LocalState x, GlobalState s_g) const noexcept {
    return targeted_samplers_.row(std::size_t{x} * num_global_states() + s_g);
  }
  std::size_t local_row_nonzeros(LocalState x, GlobalState s_g) const noexcept {
    return local_samplers_.nonzeros(std::size_t{x} * num_global_states() + s_g);
  }

  std::uint64_t fingerprint() const noexcept { return fingerprint_; }

  void check_joint_state(const JointState& s) const {
    if (s.s_g >= num_global_states()) throw RangeError("global state out of range");
    if (s.s_locals.size() != num_locals()) {
      throw DimensionError("joint state has " + std::to_string(s.s_locals.size()) +
                           " locals, model has " + std::to_string(num_locals()));
    }
    for (LocalState x : s.s_locals) {
      if (x >= num_local_states()) throw RangeError("local state out of range");
    }
  }

 private:
  void validate() const {
    const auto& sp = spec_.spaces;
    if (sp.n_global_states == 0 || sp.n_actions == 0 || sp.n_locals == 0 ||
        spec_.local_space.size() == 0) {
      throw ValidationError("dimensions", "all dimensions must be >= 1");
    }
    std::unordered_set<std::string> labels(spec_.local_space.labels.begin(),
                                           spec_.local_space.labels.end());
    if (labels.size() != spec_.local_space.size()) {
      throw ValidationError("local_labels_unique", "local state labels must be unique");
    }
    const std::size_t G = sp.n_global_states, A = sp.n_actions, L = spec_.local_space.size();
    auto check_size = [](const std::vector<double>& v, std::size_t want, const char* what) {
      if (v.size() != want) {
        throw ValidationError(std::string(what) + "_shape", "expected " + std::to_string(want) +
                                                                " entries, got " + std::to_string(v.size()));
      }
    };
    check_size(spec_.global_kernel, G * A * G, "global_kernel");
    check_size(spec_.local_kernel, L * G * L, "local_kernel");
    check_size(spec_.reward_global, G * A, "reward_global");
    check_size(spec_.reward_local, L * G, "reward_local");
    if (!(spec_.gamma > 0.0 && spec_.gamma < 1.0)) {
      throw ValidationError("gamma_range", "gamma must lie in (0, 1), got " + std::to_string(spec_.gamma));
    }
    detail::check_row_stochastic(spec_.global_kernel, G, "global_kernel");
    detail::check_row_stochastic(spec_.local_kernel, L, "local_kernel");
    for (double r : spec_.reward_global) {
      if (!std::isfinite(r)) throw ValidationError("reward_finite", "non-finite global reward");
    }
    for (double r : spec_.reward_local) {
      if (!std::isfinite(r)) throw ValidationError("reward_finite", "non-finite local reward");
    }
    if (spec_.coupling) {
      if (spec_.coupling->target_agent.size() != G) {
        throw ValidationError("coupling_shape", "target_agent needs one entry per global state");
      }
      for (std::int32_t t : spec_.coupling->target_agent) {
        if (t < -1 || t >= static_cast<std::int32_t>(sp.n_locals)) {
          throw ValidationError("coupling_target_range", "target agent index out of range");
        }
      }
      check_size(spec_.coupling->kernel, L * G * L, "targeted_kernel");
      detail::check_row_stochastic(spec_.coupling->kernel, L, "targeted_kernel");
    }
  }

  std::uint64_t compute_fingerprint() const noexcept {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    const std::uint64_t dims[4] = {num_global_states(), num_actions(), num_locals(), num_local_states()};
    h = detail::fnv1a(h, dims, sizeof dims);
    const double g = spec_.gamma;
    h = detail::fnv1a(h, &g, sizeof g);
    h = detail::fnv1a(h, spec_.global_kernel);
    h = detail::fnv1a(h, spec_.local_kernel);
    h = detail::fnv1a(h, spec_.reward_global);
    h = detail::fnv1a(h, spec_.reward_local);
    if (spec_.coupling) {
      h = detail::fnv1a(h, spec_.coupling->target_agent.data(),
                        spec_.coupling->target_agent.size() * sizeof(std::int32_t));
      h = detail::fnv1a(h, spec_.coupling->kernel);
    }
    return h;
  }

  EnvSpec spec_;
  double r_tilde_g_ = 0.0;
  double r_tilde_l_ = 0.0;
  RowSamplers global_samplers_;
  RowSamplers local_samplers_;
  RowSamplers targeted_samplers_;
  std::uint64_t fingerprint_ = 0;
};

// r(s, a_g) = r_g(s_g, a_g) + (1/n) sum_i r_l(s_i, s_g).
inline double full_reward(const EnvModel& env, const JointState& s, Action a) {
  env.check_joint_state(s);
  if (a >= env.num_actions()) throw RangeError("action out of range");
  double local = 0.0;
  for (LocalState x : s.s_locals) local += env.reward_local(x, s.s_g);
  return env.reward_global(s.s_g, a) + local / static_cast<double>(s.s_locals.size());
}

// r_Delta = r_g(s_g, a_g) + (1/k) sum_x counts[x] r_l(x, s_g).
inline double surrogate_reward(const EnvModel& env, GlobalState s_g, const EmpiricalDist& d, Action a) {
  if (s_g >= env.num_global_states()) throw RangeError("global state out of range");
  if (a >= env.num_actions()) throw RangeError("action out of range");
  if (d.num_states() != env.num_local_states()) throw DimensionError("distribution has wrong number of states");
  double local = 0.0;
  for (LocalState x = 0; x < d.num_states(); ++x) {
    if (d.counts()[x] != 0) local += d.counts()[x] * env.reward_local(x, s_g);
  }
  return env.reward_global(s_g, a) + local / static_cast<double>(d.k());
}

// Expected next empirical distribution of the k sampled agents, as a
// probability vector: sum_x F(x) P_l(. | x, s_g), with the targeted-agent
// mixture when the model has a coupling.
inline std::vector<double> local_push_forward(const EnvModel& env, GlobalState s_g, const EmpiricalDist& d) {
  if (s_g >= env.num_global_states()) throw RangeError("global state out of range");
  const std::size_t L = env.num_local_states();
  if (d.num_states() != L) throw DimensionError("distribution has wrong number of states");
  std::vector<double> out(L, 0.0);
  const double q = env.target_in_sample_prob(s_g, d.k());
  for (LocalState x = 0; x < L; ++x) {
    const double f = d.frequency(x);
    if (f == 0.0) continue;
    const auto row = env.local_row(x, s_g);
    for (std::size_t y = 0; y < L; ++y) out[y] += f * row[y];
    if (q > 0.0) {
      // One of the k sampled agents (state x with probability f) switches to
      // the targeted kernel.
      const auto trow = env.targeted_row(x, s_g);
      for (std::size_t y = 0; y < L; ++y) out[y] += q * f * (trow[y] - row[y]) / d.k();
    }
  }
  return out;
}

// One step of the full n-agent system.
inline JointState step_joint(const EnvModel& env, const JointState& s, Action a, SeededRng& rng) {
  JointState next;
  next.s_g = env.sample_global(s.s_g, a, rng);
  next.s_locals.resize(s.s_locals.size());
  const std::int32_t target = env.target_agent(s.s_g);
  for (std::size_t i = 0; i < s.s_locals.size(); ++i) {
    next.s_locals[i] = static_cast<std::int32_t>(i) == target
                           ? env.sample_targeted(s.s_locals[i], s.s_g, rng)
                           : env.sample_local(s.s_locals[i], s.s_g, rng);
  }
  return next;
}

// Uniform draw over S_g x S_l^n; the default initial-state sampler.
inline JointState sample_uniform_joint_state(const EnvModel& env, SeededRng& rng) {
  JointState s;
  s.s_g = static_cast<GlobalState>(rng.uniform_index(env.num_global_states()));
  s.s_locals.resize(env.num_locals());
  for (auto& x : s.s_locals) x = static_cast<LocalState>(rng.uniform_index(env.num_local_states()));
  return s;
}

}  // namespace subq

#endif  // SUBQ_ENV_MODEL_HPP_
