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

// Ground-truth solvers for small systems: value iteration on the full joint
// MDP, mean-field value iteration at k = n, exact policy evaluation, Monte
// Carlo policy values and the optimality gap of a learned policy.

#ifndef SUBQ_ORACLE_HPP_
#define SUBQ_ORACLE_HPP_

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "subq/bellman.hpp"
#include "subq/env_model.hpp"
#include "subq/errors.hpp"
#include "subq/lattice.hpp"
#include "subq/q_table.hpp"
#include "subq/rng.hpp"
#include "subq/subsample_q.hpp"

namespace subq {

inline constexpr std::uint64_t kJointStateBudget = 100'000;
inline constexpr std::uint64_t kJointEntryBudget = 20'000'000;
inline constexpr std::size_t kDenseSolveLimit = 4096;
inline constexpr double kDefaultOracleTol = 1e-10;

// The full system over S_g x S_l^n. Joint state index is
// s_g * L^n + sum_i s_i * L^(n-1-i). The local part of each transition is
// stored sparsely; the global part is read from the model.
class JointMdp {
 public:
  explicit JointMdp(const EnvModel& env, std::uint64_t state_budget = kJointStateBudget,
                    std::uint64_t entry_budget = kJointEntryBudget)
      : env_(env), n_(env.num_locals()), L_(env.num_local_states()), G_(env.num_global_states()) {
    long double configs = 1.0L;
    for (std::uint32_t i = 0; i < n_; ++i) configs *= L_;
    if (configs * G_ > static_cast<long double>(state_budget)) {
      throw CapacityError("joint MDP has " + std::to_string(static_cast<double>(configs * G_)) +
                          " states, budget is " + std::to_string(state_budget));
    }
    configs_ = static_cast<std::uint64_t>(configs);
    const std::uint64_t N = configs_ * G_;
    local_reward_.resize(N);
    offsets_.reserve(N + 1);
    offsets_.push_back(0);
    std::vector<double> dense(configs_), scratch(configs_);
    JointState s;
    for (std::uint64_t idx = 0; idx < N; ++idx) {
      decode_into(idx, s);
      double lr = 0.0;
      for (LocalState x : s.s_locals) lr += env.reward_local(x, s.s_g);
      local_reward_[idx] = lr / n_;

      // Product over agents, most significant agent first.
      std::uint64_t width = 1;
      dense[0] = 1.0;
      const std::int32_t target = env.target_agent(s.s_g);
      for (std::uint32_t i = 0; i < n_; ++i) {
        const auto row = static_cast<std::int32_t>(i) == target ? env.targeted_row(s.s_locals[i], s.s_g)
                                                               : env.local_row(s.s_locals[i], s.s_g);
        std::fill(scratch.begin(), scratch.begin() + width * L_, 0.0);
        for (std::uint64_t c = 0; c < width; ++c) {
          if (dense[c] == 0.0) continue;
          for (std::uint32_t y = 0; y < L_; ++y) scratch[c * L_ + y] += dense[c] * row[y];
        }
        width *= L_;
        std::swap(dense, scratch);
      }
      for (std::uint64_t c = 0; c < configs_; ++c) {
        if (dense[c] != 0.0) entries_.emplace_back(c, dense[c]);
      }
      if (entries_.size() > entry_budget) {
        throw CapacityError("joint MDP transition storage exceeds " + std::to_string(entry_budget) + " entries");
      }
      offsets_.push_back(entries_.size());
    }
  }

  const EnvModel& env() const noexcept { return env_; }
  std::uint64_t num_states() const noexcept { return configs_ * G_; }
  std::uint64_t num_local_configs() const noexcept { return configs_; }
  std::uint32_t num_actions() const noexcept { return env_.num_actions(); }

  std::uint64_t encode(const JointState& s) const {
    env_.check_joint_state(s);
    std::uint64_t c = 0;
    for (LocalState x : s.s_locals) c = c * L_ + x;
    return std::uint64_t{s.s_g} * configs_ + c;
  }

  JointState decode(std::uint64_t idx) const {
    if (idx >= num_states()) throw RangeError("joint state index out of range");
    JointState s;
    decode_into(idx, s);
    return s;
  }

  GlobalState global_of(std::uint64_t idx) const noexcept { return static_cast<GlobalState>(idx / configs_); }

  double reward(std::uint64_t idx, Action a) const noexcept {
    return env_.reward_global(global_of(idx), a) + local_reward_[idx];
  }

  // (next local configuration, probability) pairs.
  std::span<const std::pair<std::uint64_t, double>> local_next(std::uint64_t idx) const noexcept {
    return std::span(entries_).subspan(offsets_[idx], offsets_[idx + 1] - offsets_[idx]);
  }

  // Population counts of a joint state.
  EmpiricalDist population(std::uint64_t idx) const {
    JointState s;
    decode_into(idx, s);
    return population_dist(s.s_locals, L_);
  }

 private:
  void decode_into(std::uint64_t idx, JointState& s) const {
    s.s_g = static_cast<GlobalState>(idx / configs_);
    std::uint64_t c = idx % configs_;
    s.s_locals.assign(n_, 0);
    for (std::uint32_t i = n_; i-- > 0;) {
      s.s_locals[i] = static_cast<LocalState>(c % L_);
      c /= L_;
    }
  }

  const EnvModel& env_;
  std::uint32_t n_, L_, G_;
  std::uint64_t configs_ = 1;
  std::vector<double> local_reward_;
  std::vector<std::size_t> offsets_;
  std::vector<std::pair<std::uint64_t, double>> entries_;
};

// Q(s, a) over joint states, row-major (state, action).
struct JointQTable {
  std::uint64_t num_states = 0;
  std::uint32_t num_actions = 0;
  std::vector<double> values;

  JointQTable() = default;
  JointQTable(std::uint64_t states, std::uint32_t actions)
      : num_states(states), num_actions(actions), values(states * actions, 0.0) {}

  double& at(std::uint64_t s, Action a) noexcept { return values[s * num_actions + a]; }
  double at(std::uint64_t s, Action a) const noexcept { return values[s * num_actions + a]; }

  double max_at(std::uint64_t s) const noexcept {
    const double* row = values.data() + s * num_actions;
    return *std::max_element(row, row + num_actions);
  }
  Action argmax_at(std::uint64_t s) const noexcept {
    const double* row = values.data() + s * num_actions;
    Action best = 0;
    for (Action a = 1; a < num_actions; ++a) {
      if (row[a] > row[best]) best = a;
    }
    return best;
  }
  double sup_norm_diff(const JointQTable& o) const {
    if (o.values.size() != values.size()) throw DimensionError("joint tables differ in shape");
    double m = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) m = std::max(m, std::abs(values[i] - o.values[i]));
    return m;
  }
  double sup_norm() const noexcept {
    double m = 0.0;
    for (double v : values) m = std::max(m, std::abs(v));
    return m;
  }
};

// One application of the full Bellman operator T.
inline JointQTable joint_bellman(const JointMdp& mdp, const JointQTable& q) {
  const auto& env = mdp.env();
  const std::uint64_t N = mdp.num_states(), C = mdp.num_local_configs();
  const std::uint32_t A = mdp.num_actions(), G = env.num_global_states();
  std::vector<double> v(N);
  for (std::uint64_t s = 0; s < N; ++s) v[s] = q.max_at(s);
  JointQTable out(N, A);
  std::vector<double> w(G);
  for (std::uint64_t s = 0; s < N; ++s) {
    std::fill(w.begin(), w.end(), 0.0);
    for (const auto& [c, p] : mdp.local_next(s)) {
      for (GlobalState g = 0; g < G; ++g) w[g] += p * v[g * C + c];
    }
    const GlobalState sg = mdp.global_of(s);
    for (Action a = 0; a < A; ++a) {
      const auto row = env.global_row(sg, a);
      double cont = 0.0;
      for (GlobalState g = 0; g < G; ++g) cont += row[g] * w[g];
      out.at(s, a) = mdp.reward(s, a) + env.gamma() * cont;
    }
  }
  return out;
}

struct JointViResult {
  JointQTable q;
  std::vector<Action> policy;  // lowest-index greedy action per joint state
  int iterations = 0;
  double residual = 0.0;
};

// Value iteration from zero until successive iterates differ by < tol.
inline JointViResult exact_joint_vi(const JointMdp& mdp, double tol = kDefaultOracleTol, int max_iter = 1'000'000) {
  if (!(tol > 0.0)) throw InvalidParameterError("tolerance must be positive");
  JointViResult r;
  r.q = JointQTable(mdp.num_states(), mdp.num_actions());
  for (int t = 1; t <= max_iter; ++t) {
    JointQTable next = joint_bellman(mdp, r.q);
    r.residual = next.sup_norm_diff(r.q);
    r.q = std::move(next);
    r.iterations = t;
    if (r.residual < tol) break;
  }
  r.policy.resize(mdp.num_states());
  for (std::uint64_t s = 0; s < mdp.num_states(); ++s) r.policy[s] = r.q.argmax_at(s);
  return r;
}

struct FixedPointResult {
  MeanFieldQTable table;
  int iterations = 0;
  double residual = 0.0;
};

// Fixed point of the exact adapted operator T_k, iterated from zero.
inline FixedPointResult adapted_fixed_point(const ExactAdaptedOperator& op, double tol = kDefaultOracleTol,
                                            int max_iter = 1'000'000) {
  if (!(tol > 0.0)) throw InvalidParameterError("tolerance must be positive");
  MeanFieldQTable q = op.rewards();
  std::fill(q.values().begin(), q.values().end(), 0.0);
  FixedPointResult r{std::move(q), 0, 0.0};
  for (int t = 1; t <= max_iter; ++t) {
    MeanFieldQTable next = op.apply(r.table);
    r.residual = sup_norm_diff(next, r.table);
    r.table = std::move(next);
    r.iterations = t;
    if (r.residual < tol) break;
  }
  return r;
}

inline FixedPointResult adapted_fixed_point(const EnvModel& env, std::uint32_t k, double tol = kDefaultOracleTol) {
  return adapted_fixed_point(ExactAdaptedOperator(env, k), tol);
}

// Mean-field value iteration: the adapted fixed point with k = n.
inline MeanFieldQTable mean_field_vi(const EnvModel& env, double tol = kDefaultOracleTol) {
  return adapted_fixed_point(env, env.num_locals(), tol).table;
}

// Action probabilities at a joint state.
using JointPolicy = std::function<std::vector<double>(const JointState&)>;

inline JointPolicy deterministic_joint_policy(const JointMdp& mdp, std::vector<Action> actions) {
  if (actions.size() != mdp.num_states()) throw DimensionError("policy table has wrong length");
  return [&mdp, actions = std::move(actions)](const JointState& s) {
    std::vector<double> p(mdp.num_actions(), 0.0);
    p[actions[mdp.encode(s)]] = 1.0;
    return p;
  };
}

// The sampled policy's exact action law, cached per (s_g, population counts).
inline JointPolicy subsample_joint_policy(const GreedyMeanFieldPolicy& policy, std::uint32_t n) {
  const std::uint32_t L = policy.table().num_local_states();
  auto lattice = std::make_shared<CompositionLattice>(n, L);
  auto cache = std::make_shared<std::unordered_map<std::uint64_t, std::vector<double>>>();
  return [policy, lattice, cache, L](const JointState& s) {
    const std::uint64_t key = std::uint64_t{s.s_g} * lattice->size() + lattice->rank(population_dist(s.s_locals, L));
    auto it = cache->find(key);
    if (it == cache->end()) it = cache->emplace(key, stochastic_action_law(policy, s).probs).first;
    return it->second;
  };
}

// V^pi from the linear system (I - gamma P_pi) V = r_pi, dense LU.
inline std::vector<double> exact_policy_eval(const JointMdp& mdp, const JointPolicy& policy) {
  const std::uint64_t N = mdp.num_states(), C = mdp.num_local_configs();
  if (N > kDenseSolveLimit) {
    throw CapacityError("exact policy evaluation is limited to " + std::to_string(kDenseSolveLimit) +
                        " joint states, got " + std::to_string(N));
  }
  const auto& env = mdp.env();
  const std::uint32_t A = mdp.num_actions(), G = env.num_global_states();
  const double gamma = env.gamma();
  Eigen::MatrixXd M = Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(N), static_cast<Eigen::Index>(N));
  Eigen::VectorXd r(static_cast<Eigen::Index>(N));
  std::vector<double> pg(G);
  for (std::uint64_t s = 0; s < N; ++s) {
    const JointState js = mdp.decode(s);
    const auto probs = policy(js);
    if (probs.size() != A) throw PolicyError("policy returned the wrong number of action probabilities");
    std::fill(pg.begin(), pg.end(), 0.0);
    double rs = 0.0;
    for (Action a = 0; a < A; ++a) {
      if (probs[a] == 0.0) continue;
      rs += probs[a] * mdp.reward(s, a);
      const auto row = env.global_row(js.s_g, a);
      for (GlobalState g = 0; g < G; ++g) pg[g] += probs[a] * row[g];
    }
    r[static_cast<Eigen::Index>(s)] = rs;
    for (const auto& [c, p] : mdp.local_next(s)) {
      for (GlobalState g = 0; g < G; ++g) {
        if (pg[g] != 0.0) M(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(g * C + c)) -= gamma * p * pg[g];
      }
    }
  }
  const Eigen::PartialPivLU<Eigen::MatrixXd> lu(M);
  Eigen::VectorXd v = lu.solve(r);
  // One step of iterative refinement.
  const Eigen::VectorXd res = r - M * v;
  v += lu.solve(res);
  return std::vector<double>(v.data(), v.data() + v.size());
}

struct ValueEstimate {
  double mean = 0.0;
  double se = 0.0;
  std::uint64_t episodes = 0;
  int horizon = 0;
  double truncation_bound = 0.0;  // gamma^(T'+1) r~ / (1 - gamma)
};

using ActFn = std::function<Action(const JointState&, SeededRng&)>;
using InitialStateSampler = std::function<JointState(SeededRng&)>;

// Mean and standard error of truncated discounted returns. Episode e uses
// the stream derive(seed, {e}) for its initial state, actions and moves.
inline ValueEstimate mc_policy_value(const EnvModel& env, const ActFn& act, const InitialStateSampler& s0,
                                     int t_prime, std::uint64_t episodes, std::uint64_t seed) {
  if (episodes == 0) throw InvalidParameterError("mc_policy_value needs at least one episode");
  if (t_prime < 0) throw InvalidParameterError("horizon must be >= 0");
  double sum = 0.0, sum_sq = 0.0;
  for (std::uint64_t e = 0; e < episodes; ++e) {
    SeededRng rng = SeededRng::derive(seed, {e});
    JointState s = s0(rng);
    double ret = 0.0, discount = 1.0;
    for (int t = 0; t <= t_prime; ++t) {
      const Action a = act(s, rng);
      ret += discount * full_reward(env, s, a);
      s = step_joint(env, s, a, rng);
      discount *= env.gamma();
    }
    sum += ret;
    sum_sq += ret * ret;
  }
  ValueEstimate v;
  v.episodes = episodes;
  v.horizon = t_prime;
  v.mean = sum / static_cast<double>(episodes);
  if (episodes > 1) {
    const double var = std::max(0.0, (sum_sq - sum * v.mean) / static_cast<double>(episodes - 1));
    v.se = std::sqrt(var / static_cast<double>(episodes));
  }
  v.truncation_bound = std::pow(env.gamma(), t_prime + 1) * env.q_bound();
  return v;
}

inline ValueEstimate mc_policy_value(const EnvModel& env, const ActFn& act, const JointState& s0, int t_prime,
                                     std::uint64_t episodes, std::uint64_t seed) {
  return mc_policy_value(env, act, [&s0](SeededRng&) { return s0; }, t_prime, episodes, seed);
}

// Optimal values of a small system, reused across many gap evaluations.
class GapOracle {
 public:
  explicit GapOracle(const EnvModel& env, double tol = kDefaultOracleTol)
      : mdp_(env), vi_(exact_joint_vi(mdp_, tol)) {
    v_star_ = exact_policy_eval(mdp_, deterministic_joint_policy(mdp_, vi_.policy));
  }

  const JointMdp& mdp() const noexcept { return mdp_; }
  const JointViResult& vi() const noexcept { return vi_; }
  const std::vector<double>& v_star() const noexcept { return v_star_; }

  std::vector<double> values_of(const GreedyMeanFieldPolicy& policy) const {
    return exact_policy_eval(mdp_, subsample_joint_policy(policy, mdp_.env().num_locals()));
  }

  // Average of f over the initial-state law: `s0` if given, else uniform.
  double average(const std::vector<double>& f, const std::optional<JointState>& s0) const {
    if (s0) return f[mdp_.encode(*s0)];
    double sum = 0.0;
    for (double v : f) sum += v;
    return sum / static_cast<double>(f.size());
  }

 private:
  JointMdp mdp_;
  JointViResult vi_;
  std::vector<double> v_star_;
};

struct GapOptions {
  std::uint32_t k = 1;
  std::uint32_t m = 1;
  int T = 1;
  bool exact_learning = false;
  std::vector<std::uint64_t> seeds;
  std::optional<JointState> initial;  // uniform over joint states when empty
};

struct GapResult {
  std::vector<double> gaps;    // per seed
  std::vector<double> values;  // V^pi averaged over the initial law, per seed
  double v_star = 0.0;
  double mean = 0.0;
  double se = 0.0;
  std::string mode = "exact_pi_star";
};

inline double sample_mean(const std::vector<double>& xs) {
  double s = 0.0;
  for (double x : xs) s += x;
  return xs.empty() ? 0.0 : s / static_cast<double>(xs.size());
}

inline double standard_error(const std::vector<double>& xs) {
  if (xs.size() < 2) return 0.0;
  const double mu = sample_mean(xs);
  double ss = 0.0;
  for (double x : xs) ss += (x - mu) * (x - mu);
  return std::sqrt(ss / static_cast<double>(xs.size() - 1) / static_cast<double>(xs.size()));
}

// V^{pi*}(s0) - V^{pi_est}(s0) for one learned policy per seed.
inline GapResult optimality_gap(const GapOracle& oracle, const GapOptions& opt) {
  if (opt.seeds.empty()) throw InvalidParameterError("optimality_gap needs at least one seed");
  const auto& env = oracle.mdp().env();
  GapResult r;
  r.v_star = oracle.average(oracle.v_star(), opt.initial);
  for (std::uint64_t seed : opt.seeds) {
    LearnOptions lo;
    lo.k = opt.k;
    lo.m = opt.m;
    lo.T = opt.T;
    lo.seed = seed;
    lo.exact = opt.exact_learning;
    const auto learned = learn(env, lo);
    const double v = oracle.average(oracle.values_of(learned.policy), opt.initial);
    r.values.push_back(v);
    r.gaps.push_back(r.v_star - v);
  }
  r.mean = sample_mean(r.gaps);
  r.se = standard_error(r.gaps);
  return r;
}

inline GapResult optimality_gap(const EnvModel& env, const GapOptions& opt) {
  return optimality_gap(GapOracle(env), opt);
}

}  // namespace subq

#endif  // SUBQ_ORACLE_HPP_
