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

// Self-contained invariant checks run by `subq verify`.

#ifndef SUBQ_VERIFY_HPP_
#define SUBQ_VERIFY_HPP_

#include <chrono>
#include <cmath>
#include <functional>
#include <ostream>
#include <string>
#include <vector>

#include "subq/bellman.hpp"
#include "subq/envs.hpp"
#include "subq/experiment.hpp"
#include "subq/lattice.hpp"
#include "subq/oracle.hpp"
#include "subq/stats.hpp"

namespace subq {

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
  double wall_ms = 0.0;
};

struct Check {
  std::string name;
  bool full_only = false;
  std::function<std::pair<bool, std::string>()> run;
};

inline std::vector<Check> invariant_checks() {
  std::vector<Check> checks;

  checks.push_back({"lattice_rank_roundtrip", false, [] {
                      for (std::uint32_t L = 1; L <= 4; ++L) {
                        for (std::uint32_t k = 1; k <= 8; ++k) {
                          CompositionLattice lat(k, L);
                          for (DistIndex d = 0; d < lat.size(); ++d) {
                            if (lat.rank(lat.unrank(d)) != d) {
                              return std::pair{false, "L=" + std::to_string(L) + " k=" + std::to_string(k)};
                            }
                          }
                        }
                      }
                      return std::pair{true, std::string("L<=4, k<=8")};
                    }});

  checks.push_back({"reward_aggregation_identity", false, [] {
                      const auto env = build_synthetic(2, 2, 2, 6, 7);
                      double worst = 0.0;
                      SeededRng rng(1);
                      for (int trial = 0; trial < 20; ++trial) {
                        const auto s = sample_uniform_joint_state(env, rng);
                        for (Action a = 0; a < env.num_actions(); ++a) {
                          const double full = full_reward(env, s, a);
                          for (std::uint32_t k = 1; k <= 6; ++k) {
                            double sum = 0.0, count = 0.0;
                            for_each_subset(6, k, [&](std::span<const std::size_t> d) {
                              sum += surrogate_reward(env, s.s_g, empirical_dist(s.s_locals, d, 2), a);
                              count += 1.0;
                            });
                            worst = std::max(worst, std::abs(sum / count - full));
                          }
                        }
                      }
                      return std::pair{worst <= 1e-12, "max deviation " + format_double(worst)};
                    }});

  checks.push_back({"bh_tv_cap", false, [] {
                      SeededRng rng(3);
                      std::vector<LocalState> s(8);
                      for (auto& x : s) x = static_cast<LocalState>(rng.uniform_index(3));
                      const auto pop = population_dist(s, 3);
                      for (std::uint32_t k = 1; k <= 8; ++k) {
                        bool ok = true;
                        for_each_subset(8, k, [&](std::span<const std::size_t> d) {
                          if (tv_distance(empirical_dist(s, d, 3), pop) > bh_tv_bound(8, k) + 1e-12) ok = false;
                        });
                        if (!ok) return std::pair{false, "k=" + std::to_string(k)};
                      }
                      return std::pair{true, std::string("n=8, all k")};
                    }});

  checks.push_back({"exact_operator_contraction", false, [] {
                      const auto env = build_synthetic(3, 2, 2, 4, 11);
                      ExactAdaptedOperator op(env, 3);
                      SeededRng rng(5);
                      double worst = 0.0;
                      for (int t = 0; t < 20; ++t) {
                        MeanFieldQTable a(env, 3), b(env, 3);
                        for (auto& v : a.values()) v = 10.0 * rng.uniform01() - 5.0;
                        for (auto& v : b.values()) v = 10.0 * rng.uniform01() - 5.0;
                        worst = std::max(worst, sup_norm_diff(op.apply(a), op.apply(b)) / sup_norm_diff(a, b));
                      }
                      return std::pair{worst <= env.gamma() + 1e-12, "max ratio " + format_double(worst)};
                    }});

  checks.push_back({"k_eq_n_matches_joint_vi", false, [] {
                      const auto env = build_synthetic(2, 2, 2, 3, 21);
                      const JointMdp mdp(env);
                      const auto joint = exact_joint_vi(mdp);
                      const auto mf = mean_field_vi(env);
                      double worst = 0.0;
                      for (std::uint64_t s = 0; s < mdp.num_states(); ++s) {
                        const auto js = mdp.decode(s);
                        const auto d = mf.lattice().rank(population_dist(js.s_locals, 2));
                        for (Action a = 0; a < env.num_actions(); ++a) {
                          worst = std::max(worst, std::abs(mf.at(js.s_g, d, a) - joint.q.at(s, a)));
                        }
                      }
                      return std::pair{worst <= 1e-8, "max deviation " + format_double(worst)};
                    }});

  checks.push_back({"kernel_corruption_rejected", false, [] {
                      EnvSpec spec = build_synthetic(2, 2, 2, 2, 1).spec();
                      for (std::size_t i = 0; i < 2; ++i) spec.local_kernel[i] *= 0.9;
                      try {
                        EnvModel bad(spec);
                      } catch (const ValidationError& e) {
                        return std::pair{e.check() == "local_kernel_row_sum", "rejected by " + e.check()};
                      }
                      return std::pair{false, std::string("corrupted kernel accepted")};
                    }});

  checks.push_back({"boundedness_sampled_learning", false, [] {
                      const auto env = build_synthetic(3, 2, 2, 5, 4);
                      double worst = 0.0;
                      LearnOptions o;
                      o.k = 3;
                      o.m = 8;
                      o.T = 60;
                      o.seed = 9;
                      o.on_sweep = [&](int, const MeanFieldQTable& q) { worst = std::max(worst, q.sup_norm()); };
                      learn(env, o);
                      return std::pair{worst <= env.q_bound() + 1e-9,
                                       format_double(worst) + " <= " + format_double(env.q_bound())};
                    }});

  checks.push_back({"dkw_noreplace_mc", true, [] {
                      const auto [pop, L] = make_population("uniform", 50);
                      SeededRng rng(17);
                      const auto rep = mc_dkw_check(pop, L, 10, 0.3, 20'000, rng);
                      return std::pair{!rep.violation, "frequency " + format_double(*rep.measurement) + ", bound " +
                                                           format_double(rep.value)};
                    }});

  checks.push_back({"bellman_noise_decay", true, [] {
                      const auto env = build_synthetic(2, 2, 2, 4, 13);
                      const auto est = estimate_bellman_noise(env, 2, {4, 16, 64, 256}, 60, {1, 2, 3, 4, 5});
                      return std::pair{est.slope >= -0.8 && est.slope <= -0.2, "slope " + format_double(est.slope)};
                    }});

  return checks;
}

// Runs the suite; `full` adds the slower statistical checks.
inline std::vector<CheckResult> run_verify(bool full, std::ostream* log = nullptr) {
  std::vector<CheckResult> results;
  for (const auto& c : invariant_checks()) {
    if (c.full_only && !full) continue;
    CheckResult r;
    r.name = c.name;
    const auto start = std::chrono::steady_clock::now();
    try {
      std::tie(r.passed, r.detail) = c.run();
    } catch (const std::exception& e) {
      r.passed = false;
      r.detail = std::string("threw: ") + e.what();
    }
    r.wall_ms = detail::elapsed_ms(start);
    if (log) *log << (r.passed ? "PASS  " : "FAIL  ") << r.name << "  (" << r.detail << ")\n";
    results.push_back(std::move(r));
  }
  return results;
}

}  // namespace subq

#endif  // SUBQ_VERIFY_HPP_
