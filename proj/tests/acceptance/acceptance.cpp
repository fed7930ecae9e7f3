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

// Acceptance criteria, one per invocation:
//
//   subq_acceptance <id>... [--cli path/to/subq]
//
// prints one "criterion <id>: PASS|FAIL" line per id and exits non-zero if
// any failed. With no ids every criterion runs.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "../output_files.hpp"
#include "subq/experiment.hpp"
#include "subq/subq.hpp"

namespace subq {
namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

std::string cli_path;

// Synthetic environments small enough for the joint oracle.
struct Tiny {
  std::uint32_t L, G, A, n;
  std::uint64_t seed;
};

const std::vector<Tiny>& tiny_envs() {
  static const std::vector<Tiny> envs = {
      {2, 2, 2, 3, 0}, {3, 2, 2, 3, 1}, {2, 3, 3, 4, 2}, {3, 3, 2, 4, 3}, {3, 2, 3, 4, 4}, {1, 3, 2, 4, 5},
  };
  return envs;
}

EnvModel make(const Tiny& t) { return build_synthetic(t.L, t.G, t.A, t.n, t.seed); }

MeanFieldQTable random_table(const EnvModel& env, std::uint32_t k, SeededRng& rng) {
  MeanFieldQTable q(env, k);
  const double b = env.q_bound();
  for (auto& v : q.values()) v = b * (2.0 * rng.uniform01() - 1.0);
  return q;
}

// 1. Full-sample mean-field values equal the joint-MDP Q*.
Outcome full_sample_equivalence() {
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto env = build_synthetic(2, 2, 2, 3, seed, 1.0, 0.9);
    const JointMdp mdp(env);
    const auto joint = exact_joint_vi(mdp, 1e-12);
    const auto mf = mean_field_vi(env, 1e-12);
    for (std::uint64_t s = 0; s < mdp.num_states(); ++s) {
      const auto d = mf.lattice().rank(mdp.population(s));
      for (Action a = 0; a < env.num_actions(); ++a) {
        worst = std::max(worst, std::abs(mf.at(mdp.global_of(s), d, a) - joint.q.at(s, a)));
      }
    }
  }
  return {worst <= 1e-8, "max |Q_n*(s_g,F,a) - Q*(s,a)| = " + fmt(worst) + " over 5 seeds (tol 1e-8)"};
}

// 2. Both operators contract with modulus gamma.
Outcome contraction() {
  struct Case {
    std::string name;
    EnvModel env;
    std::uint32_t k;
  };
  QueueingParams qp;
  qp.capacity = 4;
  std::vector<Case> cases;
  cases.push_back({"synthetic", build_synthetic(3, 2, 2, 5, 11), 3});
  cases.push_back({"synthetic_big_action", build_synthetic(4, 3, 4, 6, 12, 1.0, 0.7), 2});
  cases.push_back({"queueing", build_queueing(qp, 3), 2});
  cases.push_back({"demand_response", build_demand_response({}, 4), 1});
  double worst_excess = -1.0;
  std::string where;
  SeededRng rng(2024);
  for (const auto& c : cases) {
    const ExactAdaptedOperator exact(c.env, c.k);
    const EmpiricalAdaptedOperator empirical(c.env, c.k, 8);
    for (int i = 0; i < 50; ++i) {
      const auto q1 = random_table(c.env, c.k, rng), q2 = random_table(c.env, c.k, rng);
      const double base = sup_norm_diff(q1, q2);
      const std::uint64_t key = rng.next();
      const double r_exact = sup_norm_diff(exact.apply(q1), exact.apply(q2)) / base;
      const double r_emp = sup_norm_diff(empirical.apply_keyed(q1, key), empirical.apply_keyed(q2, key)) / base;
      for (auto [r, op] : {std::pair{r_exact, "exact"}, std::pair{r_emp, "empirical"}}) {
        if (r - c.env.gamma() > worst_excess) {
          worst_excess = r - c.env.gamma();
          where = c.name + "/" + op;
        }
      }
    }
  }
  return {worst_excess <= 1e-12,
          "max ratio - gamma = " + fmt(worst_excess) + " at " + where + " (50 pairs x 4 envs x 2 operators)"};
}

// 3. Every sweep of every run stays inside r~/(1-gamma).
Outcome boundedness() {
  std::uint64_t sweeps = 0, runs = 0;
  double worst = -1e300;
  std::string where;
  auto run = [&](const std::string& name, const EnvModel& env, std::uint32_t k, std::uint32_t m, int T,
                 bool exact, std::uint64_t seed) {
    LearnOptions o;
    o.k = k;
    o.m = m;
    o.T = T;
    o.exact = exact;
    o.seed = seed;
    o.on_sweep = [&](int t, const MeanFieldQTable& q) {
      ++sweeps;
      const double excess = q.sup_norm() - env.q_bound();
      if (excess > worst) {
        worst = excess;
        where = name + " k=" + std::to_string(k) + " t=" + std::to_string(t);
      }
    };
    learn(env, o);
    ++runs;
  };
  for (const auto& t : tiny_envs()) {
    const auto env = make(t);
    for (std::uint32_t k = 1; k <= t.n; ++k) {
      run("synthetic", env, k, 1, 60, true, 0);
      for (std::uint32_t m : {1u, 4u, 32u}) run("synthetic", env, k, m, 60, false, 7 + m);
    }
  }
  QueueingParams qp;
  qp.capacity = 4;
  qp.unclamped = true;
  const auto queue = build_queueing(qp, 3);
  for (std::uint32_t k = 1; k <= 3; ++k) run("queueing", queue, k, 4, 80, false, 3);
  const auto negative = build_synthetic(3, 2, 2, 4, 9, -5.0, 0.95);
  for (std::uint32_t k = 1; k <= 4; ++k) run("negative_rewards", negative, k, 2, 100, false, 4);
  const auto dr = build_demand_response({}, 8);
  for (std::uint32_t k : {1u, 2u}) run("demand_response", dr, k, 10, 50, false, 1);
  return {worst <= 1e-9, std::to_string(runs) + " runs, " + std::to_string(sweeps) +
                             " sweeps; max ||Q||_inf - r~/(1-gamma) = " + fmt(worst) + " at " + where};
}

// 4. Exact adapted iteration from zero approaches its fixed point at rate gamma^t.
Outcome residual_decay() {
  double worst = -1e300;
  std::string where;
  for (const auto& t : tiny_envs()) {
    const auto env = make(t);
    for (std::uint32_t k = 1; k <= t.n; ++k) {
      const ExactAdaptedOperator op(env, k);
      const auto star = adapted_fixed_point(op, 1e-14).table;
      MeanFieldQTable q(env, k);
      for (int step = 1; step <= 100; ++step) {
        q = op.apply(q);
        const double excess = sup_norm_diff(q, star) - std::pow(env.gamma(), step) * env.q_bound();
        if (excess > worst) {
          worst = excess;
          where = "seed " + std::to_string(t.seed) + " k=" + std::to_string(k) + " t=" + std::to_string(step);
        }
      }
    }
  }
  return {worst <= 1e-10, "max ||Q^t - Q*|| - gamma^t r~/(1-gamma) = " + fmt(worst) + " at " + where +
                              " (t=1..100; fixed point solved to 1e-14, slack 1e-10)"};
}

// 5. Averaging the subsampled reward over all k-subsets gives the full reward.
Outcome reward_aggregation() {
  double worst = 0.0;
  std::uint64_t checked = 0;
  auto check_state = [&](const EnvModel& env, const JointState& s) {
    const std::uint32_t n = env.num_locals(), L = env.num_local_states();
    for (Action a = 0; a < env.num_actions(); ++a) {
      const double full = full_reward(env, s, a);
      for (std::uint32_t k = 1; k <= n; ++k) {
        double sum = 0.0;
        std::uint64_t count = 0;
        for_each_subset(n, k, [&](std::span<const std::size_t> d) {
          sum += surrogate_reward(env, s.s_g, empirical_dist(s.s_locals, d, L), a);
          ++count;
        });
        worst = std::max(worst, std::abs(sum / static_cast<double>(count) - full));
        ++checked;
      }
    }
  };
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const auto env = build_synthetic(3, 2, 2, 6, seed, 3.0);
    const JointMdp mdp(env);
    for (std::uint64_t i = 0; i < mdp.num_states(); ++i) check_state(env, mdp.decode(i));
  }
  const auto dr = build_demand_response({}, 6);
  SeededRng rng(5);
  for (int i = 0; i < 300; ++i) check_state(dr, sample_uniform_joint_state(dr, rng));
  return {worst <= 1e-12, std::to_string(checked) + " (s, a, k) triples at n=6; max deviation " + fmt(worst)};
}

// 6. Q* minus the subset average of the T-th adapted iterate is at most gamma^T r~/(1-gamma).
Outcome subset_average_gap() {
  double worst = -1e300;
  std::string where;
  for (const auto& t : tiny_envs()) {
    const auto env = make(t);
    const JointMdp mdp(env);
    const auto q_star = exact_joint_vi(mdp, 1e-13).q;
    for (std::uint32_t k = 1; k <= t.n; ++k) {
      const ExactAdaptedOperator op(env, k);
      MeanFieldQTable q(env, k);
      for (int T = 1; T <= 20; ++T) {
        q = op.apply(q);
        if (T != 1 && T != 5 && T != 20) continue;
        const double tail = std::pow(env.gamma(), T) * env.q_bound();
        for (std::uint64_t s = 0; s < mdp.num_states(); ++s) {
          const auto js = mdp.decode(s);
          for (Action a = 0; a < env.num_actions(); ++a) {
            double sum = 0.0;
            std::uint64_t count = 0;
            for_each_subset(t.n, k, [&](std::span<const std::size_t> d) {
              sum += q.value(js.s_g, empirical_dist(js.s_locals, d, t.L), a);
              ++count;
            });
            const double excess = q_star.at(s, a) - sum / static_cast<double>(count) - tail;
            if (excess > worst) {
              worst = excess;
              where = "seed " + std::to_string(t.seed) + " k=" + std::to_string(k) + " T=" + std::to_string(T);
            }
          }
        }
      }
    }
  }
  return {worst <= 1e-9, "max (Q* - avg Q_k^T) - gamma^T r~/(1-gamma) = " + fmt(worst) + " at " + where};
}

// 7. Every subset's empirical distribution is within sqrt(1 - k/n) of the population's.
Outcome bh_cap() {
  const std::uint32_t n = 8;
  std::vector<std::pair<std::vector<LocalState>, std::uint32_t>> pops;
  pops.push_back({{0, 0, 0, 0, 0, 0, 0, 1}, 2});
  pops.push_back({{0, 1, 0, 1, 0, 1, 0, 1}, 2});
  pops.push_back({{0, 0, 0, 0, 0, 0, 0, 0}, 1});
  SeededRng rng(7);
  for (std::uint32_t L : {3u, 4u, 8u}) {
    for (int i = 0; i < 4; ++i) {
      std::vector<LocalState> s(n);
      for (auto& x : s) x = static_cast<LocalState>(rng.uniform_index(L));
      pops.push_back({s, L});
    }
  }
  double worst = -1e300;
  std::uint64_t subsets = 0;
  for (const auto& [s, L] : pops) {
    const auto full = population_dist(s, L);
    for (std::uint32_t k = 1; k <= n; ++k) {
      const double cap = bh_tv_bound(n, k);
      for_each_subset(n, k, [&](std::span<const std::size_t> d) {
        worst = std::max(worst, tv_distance(empirical_dist(s, d, L), full) - cap);
        ++subsets;
      });
    }
  }
  return {worst <= 1e-12, std::to_string(subsets) + " subsets over " + std::to_string(pops.size()) +
                              " populations; max TV - sqrt(1-k/n) = " + fmt(worst)};
}

// 8. Monte Carlo frequency of large deviations against the without-replacement bound.
Outcome dkw() {
  std::uint64_t violations = 0, cases = 0;
  double worst_margin = -1e300;
  std::string where;
  std::uint64_t seed = 0;
  for (const char* kind : {"uniform", "skewed", "three_state"}) {
    const auto [pop, L] = make_population(kind, 50);
    for (std::uint32_t k : {5u, 10u, 25u}) {
      for (double eps : {0.1, 0.2, 0.3}) {
        SeededRng rng(++seed);
        const auto rep = mc_dkw_check(pop, L, k, eps, 100'000, rng);
        ++cases;
        violations += rep.violation ? 1 : 0;
        // Positive margin means the lower confidence limit exceeds the bound.
        const double margin = (*rep.measurement - rep.slack) - std::min(rep.value, 1.0);
        if (margin > worst_margin) {
          worst_margin = margin;
          where = std::string(kind) + " k=" + std::to_string(k) + " eps=" + fmt(eps) + " freq " +
                  fmt(*rep.measurement) + " bound " + fmt(rep.value);
        }
      }
    }
  }
  return {violations == 0, std::to_string(cases) + " cases x 1e5 trials, " + std::to_string(violations) +
                               " violations; closest: " + where};
}

// 9. Fixed points are Lipschitz in the sampled distribution with constant 2 ||r_l|| / (1-gamma).
Outcome lipschitz() {
  double worst = -1e300, zero_tv = 0.0;
  std::string where;
  std::uint64_t pairs = 0;
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const auto env = build_synthetic(2, 2, 2, 6, seed);
    for (auto [k, kp] : {std::pair{2u, 3u}, std::pair{2u, 6u}, std::pair{3u, 6u}}) {
      const auto scan = lipschitz_ratio_scan(env, k, kp, 1e-12);
      pairs += scan.pairs;
      zero_tv = std::max(zero_tv, scan.max_diff_at_zero_tv);
      if (scan.max_ratio - scan.bound > worst) {
        worst = scan.max_ratio - scan.bound;
        where = "seed " + std::to_string(seed) + " (k,k')=(" + std::to_string(k) + "," + std::to_string(kp) +
                ") ratio " + fmt(scan.max_ratio) + " bound " + fmt(scan.bound);
      }
    }
  }
  return {worst <= 1e-9, std::to_string(pairs) + " pairs; max ratio - bound = " + fmt(worst) + " at " + where +
                             "; largest difference at TV=0: " + fmt(zero_tv)};
}

// 10. Sampling error of the learned table shrinks like m^(-1/2).
Outcome noise_decay() {
  const auto env = build_synthetic(2, 2, 2, 4, 13);
  std::vector<std::uint64_t> seeds;
  for (std::uint64_t s = 1; s <= 20; ++s) seeds.push_back(s);
  const auto est = estimate_bellman_noise(env, 2, {4, 16, 64, 256}, 100, seeds);
  std::string means;
  for (std::size_t i = 0; i < est.mean.size(); ++i) {
    means += (i ? ", " : "") + std::string("m=") + std::to_string(est.m_list[i]) + ": " + fmt(est.mean[i]);
  }
  return {est.slope >= -0.8 && est.slope <= -0.2, "slope " + fmt(est.slope) + " (" + means + ")"};
}

// 11. Optimality gap against exact pi* on a tiny system.
Outcome gap_trend() {
  const auto env = build_synthetic(3, 2, 2, 4, 1);
  const GapOracle oracle(env);
  std::vector<std::uint64_t> seeds;
  for (std::uint64_t s = 1; s <= 20; ++s) seeds.push_back(s);
  bool nonneg = true, bounded = true;
  double min_gap = 1e300;
  std::vector<double> means;
  std::string detail;
  for (std::uint32_t k = 1; k <= 4; ++k) {
    GapOptions o;
    o.k = k;
    o.m = 64;
    o.T = 200;
    o.seeds = seeds;
    const auto r = optimality_gap(oracle, o);
    for (double g : r.gaps) {
      min_gap = std::min(min_gap, g);
      if (g < -1e-9) nonneg = false;
    }
    const double eps = estimate_bellman_noise(env, k, {64}, 200, seeds).mean[0];
    const double bound = main_bound(4, k, env.gamma(), env.r_tilde(), 3, 2, eps);
    if (r.mean > bound) bounded = false;
    means.push_back(r.mean);
    detail += " k=" + std::to_string(k) + ": gap " + fmt(r.mean) + " +- " + fmt(r.se) + ", eps " + fmt(eps) +
              ", bound " + fmt(bound) + ";";
  }
  const bool trend = means.back() <= means.front();
  return {nonneg && trend && bounded, std::string("(a) ") + (nonneg ? "ok" : "FAIL") + " min gap " + fmt(min_gap) +
                                          " (b) " + (trend ? "ok" : "FAIL") + " (c) " + (bounded ? "ok" : "FAIL") +
                                          ";" + detail};
}

// 12. Learn wall time on the demand-response preset grows with k.
Outcome runtime_scaling() {
  const auto env = build_demand_response({}, 8);
  std::vector<double> medians;
  std::string detail;
  bool complete = true;
  for (std::uint32_t k : {1u, 2u, 4u, 8u}) {
    std::vector<double> wall;
    std::string failure;
    for (int rep = 0; rep < 5; ++rep) {
      LearnOptions o;
      o.k = k;
      o.m = 10;
      o.T = 50;
      o.seed = static_cast<std::uint64_t>(rep);
      try {
        wall.push_back(learn(env, o).report.wall_ms);
      } catch (const CapacityError& e) {
        failure = e.what();
        break;
      }
    }
    if (!failure.empty()) {
      complete = false;
      detail += " k=" + std::to_string(k) + ": not measurable (" + failure + ");";
      continue;
    }
    std::sort(wall.begin(), wall.end());
    medians.push_back(wall[2]);
    detail += " k=" + std::to_string(k) + ": median " + fmt(wall[2]) + " ms;";
  }
  const bool monotone = std::is_sorted(medians.begin(), medians.end());
  return {complete && monotone, std::string(monotone ? "measured medians nondecreasing" : "medians not monotone") +
                                    ";" + detail};
}

// 13. Repeated CLI runs write identical data files.
Outcome determinism() {
  if (cli_path.empty()) return {false, "no --cli path given"};
  const std::string root = testing::temp_dir("acceptance_determinism");
  const std::string config = root + "/run.json";
  {
    std::ofstream f(config);
    f << R"({"env": {"preset": "synthetic", "num_local_states": 2, "seed": 5}, "n": 3, "k": [1, 2, 3],
  "m": 4, "T": 30, "T_prime": 20, "episodes": 40, "seeds": [1, 2], "repetitions": 2, "jobs": 2})";
  }
  const std::vector<std::pair<std::string, std::string>> commands = {
      {"learn", "learn --config " + config},
      {"execute", "execute --config " + config},
      {"gap-sweep", "gap-sweep --config " + config},
      {"bench", "bench --config " + config},
      {"dkw-check", "dkw-check --population skewed --k 10 --eps 0.2 --trials 20000 --seed 3 --jobs 2"},
  };
  std::vector<std::string> diffs;
  for (const auto& [name, args] : commands) {
    for (const char* run : {"a", "b"}) {
      const std::string cmd =
          "\"" + cli_path + "\" " + args + " --out \"" + root + "/" + run + "/" + name + "\" > /dev/null";
      if (std::system(cmd.c_str()) != 0) return {false, "command failed: " + cmd};
    }
    for (const auto& d : testing::compare_output_dirs(root + "/a/" + name, root + "/b/" + name)) {
      diffs.push_back(name + "/" + d);
    }
  }
  if (!diffs.empty()) return {false, std::to_string(diffs.size()) + " differing files, first: " + diffs[0]};
  return {true, "learn, execute, gap-sweep, bench, dkw-check: data files byte-identical (wall_ms masked)"};
}

const std::map<int, std::pair<std::string, std::function<Outcome()>>>& criteria() {
  static const std::map<int, std::pair<std::string, std::function<Outcome()>>> all = {
      {1, {"full-sample equivalence", full_sample_equivalence}},
      {2, {"gamma-contraction", contraction}},
      {3, {"boundedness", boundedness}},
      {4, {"residual decay", residual_decay}},
      {5, {"reward aggregation", reward_aggregation}},
      {6, {"subset-average gap", subset_average_gap}},
      {7, {"TV cap", bh_cap}},
      {8, {"DKW without replacement", dkw}},
      {9, {"Lipschitz constant", lipschitz}},
      {10, {"Bellman-noise decay", noise_decay}},
      {11, {"optimality-gap trend", gap_trend}},
      {12, {"runtime scaling", runtime_scaling}},
      {13, {"determinism", determinism}},
  };
  return all;
}

}  // namespace
}  // namespace subq

int main(int argc, char** argv) {
  std::vector<int> ids;
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--cli" && i + 1 < argc) {
      subq::cli_path = argv[++i];
    } else {
      ids.push_back(std::stoi(arg));
    }
  }
  if (ids.empty()) {
    for (const auto& [id, _] : subq::criteria()) ids.push_back(id);
  }
  int failed = 0;
  for (int id : ids) {
    const auto it = subq::criteria().find(id);
    if (it == subq::criteria().end()) {
      std::cerr << "unknown criterion " << id << "\n";
      return 2;
    }
    const auto start = std::chrono::steady_clock::now();
    subq::Outcome out;
    try {
      out = it->second.second();
    } catch (const std::exception& e) {
      out = {false, std::string("threw: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::cout << "criterion " << id << " (" << it->second.first << "): " << (out.pass ? "PASS" : "FAIL") << "  "
              << out.detail << "  [" << subq::fmt(secs) << " s]" << std::endl;
    failed += out.pass ? 0 : 1;
  }
  return failed == 0 ? 0 : 1;
}
