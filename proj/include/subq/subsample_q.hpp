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

// Learning a mean-field table for a k-agent sample, and executing the learned
// policy on the full n-agent system by re-sampling k agents every step.

#ifndef SUBQ_SUBSAMPLE_Q_HPP_
#define SUBQ_SUBSAMPLE_Q_HPP_

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "subq/bellman.hpp"
#include "subq/env_model.hpp"
#include "subq/errors.hpp"
#include "subq/lattice.hpp"
#include "subq/q_table.hpp"
#include "subq/rng.hpp"

namespace subq {

// Learning-rate sequence for the damped update Q <- (1-eta_t) Q + eta_t T Q.
struct EtaSchedule {
  enum class Kind { kConstant, kHarmonic, kPower };
  Kind kind = Kind::kConstant;
  double value = 1.0;  // constant rate, or exponent for kPower

  static EtaSchedule constant(double eta) { return {Kind::kConstant, eta}; }
  static EtaSchedule harmonic() { return {Kind::kHarmonic, 1.0}; }
  // eta_t = t^-exponent
  static EtaSchedule power(double exponent) { return {Kind::kPower, exponent}; }

  // t counts from 1.
  double at(int t) const {
    switch (kind) {
      case Kind::kConstant:
        return value;
      case Kind::kHarmonic:
        return 1.0 / t;
      case Kind::kPower:
        return std::pow(static_cast<double>(t), -value);
    }
    return value;
  }
};

struct LearnOptions {
  std::uint32_t k = 1;
  std::uint32_t m = 1;
  int T = 1;
  std::uint64_t seed = 0;
  // Use the exact operator T_k instead of sampling (m is then ignored).
  bool exact = false;
  std::optional<EtaSchedule> eta;
  // Optional early stop once successive iterates differ by less than this.
  std::optional<double> residual_tol;
  std::uint64_t entry_budget = kDefaultTableEntryBudget;
  // Called after every sweep with (t, Q^t).
  std::function<void(int, const MeanFieldQTable&)> on_sweep;
};

struct LearnReport {
  int iterations = 0;
  double final_residual = 0.0;
  double wall_ms = 0.0;
  std::uint64_t table_entries = 0;
  std::uint64_t seed = 0;
  std::uint32_t k = 0;
  std::uint32_t m = 0;
  bool exact = false;
  // The agent sample drawn at the start of learning. The table depends on it
  // only through k.
  std::vector<std::size_t> delta;
  double max_abs_q = 0.0;
};

// Deterministic greedy policy over a learned table; ties go to the lowest
// action index.
class GreedyMeanFieldPolicy {
 public:
  explicit GreedyMeanFieldPolicy(std::shared_ptr<const MeanFieldQTable> table) : table_(std::move(table)) {
    if (!table_) throw PolicyError("greedy policy needs a table");
  }

  const MeanFieldQTable& table() const noexcept { return *table_; }
  std::uint32_t k() const noexcept { return table_->k(); }

  Action action_at(GlobalState s_g, DistIndex d) const noexcept {
    const auto row = table_->row(s_g, d);
    Action best = 0;
    for (Action a = 1; a < row.size(); ++a) {
      if (row[a] > row[best]) best = a;
    }
    return best;
  }

  Action operator()(GlobalState s_g, const EmpiricalDist& d) const {
    if (d.k() != table_->k()) {
      throw PolicyError("policy was learned for k=" + std::to_string(table_->k()) +
                        ", got a distribution of support " + std::to_string(d.k()));
    }
    if (s_g >= table_->num_global_states()) throw RangeError("global state out of range");
    return action_at(s_g, table_->lattice().rank(d));
  }

 private:
  std::shared_ptr<const MeanFieldQTable> table_;
};

inline Action greedy_action(const GreedyMeanFieldPolicy& policy, GlobalState s_g, const EmpiricalDist& d) {
  return policy(s_g, d);
}

struct LearnResult {
  std::shared_ptr<const MeanFieldQTable> table;
  GreedyMeanFieldPolicy policy;
  LearnReport report;
};

// Offline learning: T synchronous sweeps of the adapted operator from the zero
// table, optionally damped by a learning-rate schedule.
inline LearnResult learn(const EnvModel& env, const LearnOptions& opt) {
  if (opt.k == 0 || opt.k > env.num_locals()) {
    throw InvalidParameterError("learn needs 1 <= k <= n (k=" + std::to_string(opt.k) + ", n=" +
                                std::to_string(env.num_locals()) + ")");
  }
  if (opt.T < 1) throw InvalidParameterError("learn needs T >= 1");
  if (!opt.exact && opt.m == 0) throw InvalidParameterError("learn needs m >= 1");
  const auto start = std::chrono::steady_clock::now();

  SeededRng rng(opt.seed);
  LearnReport report;
  report.seed = opt.seed;
  report.k = opt.k;
  report.m = opt.exact ? 0 : opt.m;
  report.exact = opt.exact;
  report.delta = sample_subset(env.num_locals(), opt.k, rng);

  std::optional<ExactAdaptedOperator> exact_op;
  std::optional<EmpiricalAdaptedOperator> sampled_op;
  if (opt.exact) {
    exact_op.emplace(env, opt.k);
  } else {
    sampled_op.emplace(env, opt.k, opt.m, opt.entry_budget);
  }
  MeanFieldQTable q(env, opt.k, opt.entry_budget);
  for (int t = 1; t <= opt.T; ++t) {
    MeanFieldQTable next = exact_op ? exact_op->apply(q) : sampled_op->apply(q, rng);
    if (opt.eta) next = stable_update(q, next, opt.eta->at(t));
    report.final_residual = sup_norm_diff(next, q);
    q = std::move(next);
    report.iterations = t;
    if (opt.on_sweep) opt.on_sweep(t, q);
    if (opt.residual_tol && report.final_residual < *opt.residual_tol) break;
  }
  report.table_entries = q.size();
  report.max_abs_q = q.sup_norm();
  report.wall_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  auto table = std::make_shared<const MeanFieldQTable>(std::move(q));
  return LearnResult{table, GreedyMeanFieldPolicy(table), std::move(report)};
}

// Samples k of the n agents every step and acts greedily on their empirical
// distribution.
class StochasticSubsamplePolicy {
 public:
  StochasticSubsamplePolicy(GreedyMeanFieldPolicy greedy, std::uint32_t n)
      : greedy_(std::move(greedy)), n_(n) {
    if (greedy_.k() > n) throw PolicyError("sample size k exceeds n");
  }

  const GreedyMeanFieldPolicy& greedy() const noexcept { return greedy_; }
  std::uint32_t k() const noexcept { return greedy_.k(); }
  std::uint32_t n() const noexcept { return n_; }

  // Draws Delta, then acts. `delta_out` receives the sample when non-null.
  Action act(const JointState& s, SeededRng& rng, std::vector<std::size_t>* delta_out = nullptr) const {
    auto delta = sample_subset(n_, k(), rng);
    const auto d = empirical_dist(s.s_locals, delta, greedy_.table().num_local_states());
    const Action a = greedy_.action_at(s.s_g, greedy_.table().lattice().rank(d));
    if (delta_out) *delta_out = std::move(delta);
    return a;
  }

 private:
  GreedyMeanFieldPolicy greedy_;
  std::uint32_t n_;
};

struct TrajectoryStep {
  int t = 0;
  JointState state;
  std::vector<std::size_t> delta;
  Action action = 0;
  double reward = 0.0;
  double discounted_reward = 0.0;  // gamma^t * reward
  double cumulative = 0.0;         // R_{t+1}
};

struct Trajectory {
  std::vector<TrajectoryStep> steps;

  double total_return() const noexcept { return steps.empty() ? 0.0 : steps.back().cumulative; }
};

// Runs steps t = 0..T' of the full system from `initial`. Every step draws a
// fresh sample, acts, collects the full reward and moves all n agents.
inline Trajectory execute(const EnvModel& env, const StochasticSubsamplePolicy& policy, int t_prime,
                          std::uint64_t seed, const JointState& initial) {
  if (t_prime < 0) throw InvalidParameterError("execute needs T' >= 0");
  env.check_joint_state(initial);
  if (policy.n() != env.num_locals()) throw PolicyError("policy and model disagree on n");
  SeededRng rng(seed);
  Trajectory traj;
  traj.steps.reserve(static_cast<std::size_t>(t_prime) + 1);
  JointState s = initial;
  double discount = 1.0, total = 0.0;
  for (int t = 0; t <= t_prime; ++t) {
    TrajectoryStep step;
    step.t = t;
    step.state = s;
    step.action = policy.act(s, rng, &step.delta);
    step.reward = full_reward(env, s, step.action);
    step.discounted_reward = discount * step.reward;
    total += step.discounted_reward;
    step.cumulative = total;
    s = step_joint(env, s, step.action, rng);
    discount *= env.gamma();
    traj.steps.push_back(std::move(step));
  }
  return traj;
}

inline constexpr char kTrajectoryCsvHeader[] = "t,s_g,a_g,reward,discounted_cum";

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void write_trajectory_csv(const Trajectory& traj, std::ostream& out) {
  out << kTrajectoryCsvHeader << '\n';
  for (const auto& s : traj.steps) {
    out << s.t << ',' << s.state.s_g << ',' << s.action << ',' << format_double(s.reward) << ','
        << format_double(s.cumulative) << '\n';
  }
}

// Action distribution of the sampled policy at one joint state.
struct ActionLaw {
  std::vector<double> probs;
  bool exact = true;
  std::uint64_t samples = 0;              // Monte Carlo sample count when !exact
  std::vector<double> standard_errors;    // per action, when !exact
};

inline constexpr std::uint64_t kActionLawEnumerationBudget = 1'000'000;
inline constexpr std::uint64_t kActionLawMonteCarloSamples = 100'000;

// pi(a | s) = (1 / C(n,k)) sum_Delta 1{greedy(s_g, F_Delta) = a}.
//
// The sum over subsets is grouped by the sample's count vector c: exactly
// prod_x C(N_x, c_x) subsets give counts c, where N is the population count
// vector. Falls back to Monte Carlo over subsets when the number of distinct
// sample count vectors exceeds the enumeration budget.
inline ActionLaw stochastic_action_law(const GreedyMeanFieldPolicy& policy, const JointState& s,
                                       std::uint64_t seed = 0,
                                       std::uint64_t enumeration_budget = kActionLawEnumerationBudget,
                                       std::uint64_t mc_samples = kActionLawMonteCarloSamples) {
  const auto& table = policy.table();
  const std::uint32_t L = table.num_local_states(), k = table.k(), A = table.num_actions();
  const auto n = static_cast<std::uint32_t>(s.s_locals.size());
  if (k > n) throw PolicyError("sample size k exceeds n");
  const EmpiricalDist pop = population_dist(s.s_locals, L);
  ActionLaw law;
  law.probs.assign(A, 0.0);

  std::uint32_t support = 0;
  for (auto c : pop.counts()) support += c > 0 ? 1 : 0;
  if (lattice_size(k, support) <= enumeration_budget) {
    const double total = binomial_real(static_cast<int>(n), static_cast<int>(k));
    std::vector<std::uint32_t> c(L, 0);
    std::vector<std::uint32_t> cap(L + 1, 0);  // cap[x] = sum_{y >= x} N_y
    for (std::uint32_t x = L; x-- > 0;) cap[x] = cap[x + 1] + pop.counts()[x];
    const auto& lat = table.lattice();
    std::function<void(std::uint32_t, std::uint32_t, double)> rec = [&](std::uint32_t x, std::uint32_t left,
                                                                        double weight) {
      if (x == L) {
        if (left == 0) law.probs[policy.action_at(s.s_g, lat.rank_counts(c))] += weight / total;
        return;
      }
      const std::uint32_t lo = left > cap[x + 1] ? left - cap[x + 1] : 0;
      const std::uint32_t hi = std::min(left, pop.counts()[x]);
      for (std::uint32_t v = lo; v <= hi; ++v) {
        c[x] = v;
        rec(x + 1, left - v,
            weight * binomial_real(static_cast<int>(pop.counts()[x]), static_cast<int>(v)));
      }
      c[x] = 0;
    };
    rec(0, k, 1.0);
    return law;
  }

  law.exact = false;
  law.samples = mc_samples;
  SeededRng rng(seed);
  StochasticSubsamplePolicy sampler(policy, n);
  std::vector<std::uint64_t> hits(A, 0);
  for (std::uint64_t i = 0; i < mc_samples; ++i) ++hits[sampler.act(s, rng)];
  law.standard_errors.resize(A);
  for (Action a = 0; a < A; ++a) {
    const double p = static_cast<double>(hits[a]) / mc_samples;
    law.probs[a] = p;
    law.standard_errors[a] = std::sqrt(p * (1.0 - p) / mc_samples);
  }
  return law;
}

}  // namespace subq

#endif  // SUBQ_SUBSAMPLE_Q_HPP_
