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

#include <gtest/gtest.h>

#include <cmath>

#include "test_support.hpp"

namespace subq {
namespace {

using testing::EnvShape;
using testing::for_trials;
using testing::gen_env;
using testing::gen_int;

std::map<std::vector<std::uint32_t>, double> as_map(const NextDistLaw& law, const CompositionLattice& lat) {
  std::map<std::vector<std::uint32_t>, double> m;
  for (const auto& [d, p] : law.entries) {
    const auto e = lat.unrank(d);
    m[{e.counts().begin(), e.counts().end()}] += p;
  }
  return m;
}

EnvModel coin_env() {
  EnvSpec spec;
  spec.spaces = {1, 1, 2};
  spec.local_space = LocalStateSpace::numbered(2);
  spec.global_kernel = {1.0};
  spec.local_kernel = {0.5, 0.5, 0.5, 0.5};
  spec.reward_global = {0.0};
  spec.reward_local = {0.0, 1.0};
  return EnvModel(std::move(spec));
}

TEST(NextDistLawTest, TwoCoinFlips) {
  const auto env = coin_env();
  const auto law = as_map(next_dist_law(env, 0, EmpiricalDist({2, 0})), CompositionLattice(2, 2));
  ASSERT_EQ(law.size(), 3u);
  EXPECT_NEAR((law.at({2, 0})), 0.25, 1e-15);
  EXPECT_NEAR((law.at({1, 1})), 0.5, 1e-15);
  EXPECT_NEAR((law.at({0, 2})), 0.25, 1e-15);
}

TEST(NextDistLawTest, IdentityKernelIsPointMass) {
  EnvSpec spec;
  spec.spaces = {2, 1, 5};
  spec.local_space = LocalStateSpace::numbered(3);
  spec.global_kernel = {1, 0, 0, 1};
  spec.local_kernel.assign(3 * 2 * 3, 0.0);
  for (std::size_t x = 0; x < 3; ++x) {
    for (std::size_t s = 0; s < 2; ++s) spec.local_kernel[(x * 2 + s) * 3 + x] = 1.0;
  }
  spec.reward_global = {0, 0};
  spec.reward_local.assign(6, 0.0);
  const EnvModel env(std::move(spec));
  const EmpiricalDist d({2, 0, 3});
  const auto law = next_dist_law(env, 1, d);
  ASSERT_EQ(law.entries.size(), 1u);
  EXPECT_EQ(law.entries[0].first, CompositionLattice(5, 3).rank(d));
  EXPECT_DOUBLE_EQ(law.entries[0].second, 1.0);
}

TEST(NextDistLawTest, SingleAgentFollowsKernelRow) {
  const auto env = build_synthetic(4, 2, 1, 3, 17);
  const CompositionLattice lat(1, 4);
  for (LocalState x = 0; x < 4; ++x) {
    const auto law = as_map(next_dist_law(env, 1, EmpiricalDist::point_mass(4, x, 1)), lat);
    for (LocalState y = 0; y < 4; ++y) {
      std::vector<std::uint32_t> c(4, 0);
      c[y] = 1;
      EXPECT_NEAR(law.count(c) ? law.at(c) : 0.0, env.local_prob(x, 1, y), 1e-15);
    }
  }
}

TEST(NextDistLawTest, MatchesOutcomeEnumeration) {
  for_trials(150, 31, [](SeededRng& rng, int) {
    EnvShape sh = testing::gen_shape(rng);
    sh.n = gen_int(rng, 1, 5);
    const auto env = gen_env(rng, sh);
    const std::uint32_t k = gen_int(rng, 1, sh.n);
    const auto counts = testing::gen_counts(rng, k, sh.L);
    const auto s = static_cast<GlobalState>(rng.uniform_index(sh.G));
    const auto law = next_dist_law(env, s, EmpiricalDist(counts));
    EXPECT_NEAR(law.total_mass(), 1.0, 1e-10);
    const auto got = as_map(law, CompositionLattice(k, sh.L));
    const auto want = testing::brute_next_law(env, s, counts);
    for (const auto& [c, p] : want) EXPECT_NEAR(got.count(c) ? got.at(c) : 0.0, p, 1e-13);
    for (const auto& [c, p] : got) EXPECT_NEAR(want.count(c) ? want.at(c) : 0.0, p, 1e-13);
  });
}

TEST(NextDistLawTest, MeanIsKTimesPushForward) {
  for_trials(100, 32, [](SeededRng& rng, int) {
    EnvShape sh = testing::gen_shape(rng);
    sh.n = gen_int(rng, 1, 8);
    const auto env = gen_env(rng, sh);
    const std::uint32_t k = gen_int(rng, 1, sh.n);
    const EmpiricalDist d(testing::gen_counts(rng, k, sh.L));
    const auto s = static_cast<GlobalState>(rng.uniform_index(sh.G));
    const CompositionLattice lat(k, sh.L);
    std::vector<double> mean(sh.L, 0.0);
    for (const auto& [idx, p] : next_dist_law(env, s, d).entries) {
      const auto e = lat.unrank(idx);
      for (std::size_t y = 0; y < sh.L; ++y) mean[y] += p * e.count(y);
    }
    const auto push = local_push_forward(env, s, d);
    for (std::size_t y = 0; y < sh.L; ++y) EXPECT_NEAR(mean[y], k * push[y], 1e-10);
  });
}

TEST(NextDistLawTest, BudgetExceededIsCapacityError) {
  const auto env = build_demand_response({}, 8);
  EXPECT_THROW(next_dist_law(env, 0, EmpiricalDist::point_mass(50, 0, 8)), CapacityError);
  EXPECT_THROW(ExactAdaptedOperator(env, 8), CapacityError);
}

TEST(ExactOperatorTest, ZeroTableGivesSurrogateRewards) {
  for_trials(30, 33, [](SeededRng& rng, int) {
    const auto env = gen_env(rng, testing::gen_shape(rng));
    const std::uint32_t k = gen_int(rng, 1, env.num_locals());
    const auto out = exact_adapted_bellman(env, MeanFieldQTable(env, k));
    const auto& lat = out.lattice();
    for (GlobalState s = 0; s < env.num_global_states(); ++s) {
      for (DistIndex d = 0; d < lat.size(); ++d) {
        for (Action a = 0; a < env.num_actions(); ++a) {
          EXPECT_NEAR(out.at(s, d, a), surrogate_reward(env, s, lat.unrank(d), a), 1e-14);
        }
      }
    }
  });
}

TEST(ExactOperatorTest, ConstantTableShiftsByGammaC) {
  for_trials(30, 34, [](SeededRng& rng, int) {
    const auto env = gen_env(rng, testing::gen_shape(rng));
    const std::uint32_t k = gen_int(rng, 1, env.num_locals());
    const double c = 10.0 * rng.uniform01() - 5.0;
    MeanFieldQTable q(env, k);
    for (auto& v : q.values()) v = c;
    const auto out = exact_adapted_bellman(env, q);
    const auto r = surrogate_reward_table(env, k);
    for (std::size_t i = 0; i < out.size(); ++i) EXPECT_NEAR(out.values()[i], r.values()[i] + env.gamma() * c, 1e-12);
  });
}

TEST(ExactOperatorTest, MatchesBruteForceOperator) {
  for_trials(80, 35, [](SeededRng& rng, int) {
    EnvShape sh = testing::gen_shape(rng);
    sh.n = gen_int(rng, 1, 5);
    const auto env = gen_env(rng, sh);
    const std::uint32_t k = gen_int(rng, 1, sh.n);
    const auto q = testing::gen_table(rng, env, k, 5.0);
    const auto out = exact_adapted_bellman(env, q);
    const auto want = testing::brute_adapted_bellman(env, q);
    EXPECT_LT(testing::max_abs_diff({out.values().begin(), out.values().end()}, want), 1e-12);
  });
}

TEST(ExactOperatorTest, IsGammaContraction) {
  for_trials(50, 36, [](SeededRng& rng, int) {
    EnvShape sh = testing::gen_shape(rng);
    sh.gamma = 0.5 + 0.49 * rng.uniform01();
    const auto env = gen_env(rng, sh);
    const std::uint32_t k = gen_int(rng, 1, sh.n);
    ExactAdaptedOperator op(env, k);
    const auto a = testing::gen_table(rng, env, k, 10.0), b = testing::gen_table(rng, env, k, 10.0);
    EXPECT_LE(sup_norm_diff(op.apply(a), op.apply(b)), env.gamma() * sup_norm_diff(a, b) * (1 + 1e-12) + 1e-12);
  });
}

TEST(ExactOperatorTest, RejectsForeignTable) {
  const auto env = build_synthetic(2, 2, 2, 3, 1), other = build_synthetic(2, 2, 2, 3, 2);
  EXPECT_THROW(exact_adapted_bellman(env, MeanFieldQTable(other, 2)), DimensionError);
  ExactAdaptedOperator op(env, 2);
  EXPECT_THROW(op.apply(MeanFieldQTable(env, 3)), DimensionError);
}

TEST(EmpiricalOperatorTest, DeterministicKernelsMatchExactOperator) {
  for_trials(40, 37, [](SeededRng& rng, int) {
    EnvShape sh = testing::gen_shape(rng);
    sh.deterministic = true;
    sh.coupling = false;
    const auto env = gen_env(rng, sh);
    const std::uint32_t k = gen_int(rng, 1, sh.n);
    const std::uint32_t m = gen_int(rng, 1, 9);
    const auto q = testing::gen_table(rng, env, k, 3.0);
    SeededRng draw(rng.next());
    const auto got = empirical_adapted_bellman(env, q, m, draw);
    EXPECT_LT(sup_norm_diff(got, exact_adapted_bellman(env, q)), 1e-12);
  });
}

// Averages `reps` independent sampled sweeps and compares every entry with the
// exact operator at four standard errors.
void expect_unbiased(const EnvModel& env, std::uint32_t k, std::uint32_t m, int reps, std::uint64_t seed) {
  SeededRng rng(seed);
  const auto q = testing::gen_table(rng, env, k, 2.0);
  const auto exact = exact_adapted_bellman(env, q);
  EmpiricalAdaptedOperator op(env, k, m);
  std::vector<double> sum(q.size(), 0.0), sum_sq(q.size(), 0.0);
  for (int r = 0; r < reps; ++r) {
    const auto out = op.apply(q, rng);
    for (std::size_t i = 0; i < q.size(); ++i) {
      sum[i] += out.values()[i];
      sum_sq[i] += out.values()[i] * out.values()[i];
    }
  }
  int outside = 0;
  for (std::size_t i = 0; i < q.size(); ++i) {
    const double mean = sum[i] / reps;
    const double var = std::max(0.0, (sum_sq[i] - reps * mean * mean) / (reps - 1));
    const double se = std::sqrt(var / reps);
    if (std::abs(mean - exact.values()[i]) > 4.0 * se + 1e-12) ++outside;
  }
  EXPECT_EQ(outside, 0) << "of " << q.size() << " entries";
}

TEST(EmpiricalOperatorTest, UnbiasedAgainstExactOperator) {
  expect_unbiased(build_synthetic(3, 2, 2, 4, 5), 3, 64, 200, 38);
}

TEST(EmpiricalOperatorTest, UnbiasedWithTargetedCoupling) {
  QueueingParams p;
  p.capacity = 3;
  expect_unbiased(build_queueing(p, 3), 2, 64, 200, 39);
}

TEST(EmpiricalOperatorTest, UnbiasedOnRuntimeSortPath) {
  // k above the compile-time sizes exercises the generic sort.
  expect_unbiased(build_synthetic(2, 2, 2, 10, 6), 10, 32, 200, 40);
}

TEST(EmpiricalOperatorTest, UnbiasedOnCountingPath) {
  // k above the sorting limit exercises the count-vector path.
  expect_unbiased(build_synthetic(2, 1, 2, 26, 7), 26, 16, 200, 41);
}

TEST(EmpiricalOperatorTest, SharedKeyContraction) {
  for_trials(50, 42, [](SeededRng& rng, int) {
    const auto env = gen_env(rng, testing::gen_shape(rng));
    const std::uint32_t k = gen_int(rng, 1, env.num_locals());
    EmpiricalAdaptedOperator op(env, k, gen_int(rng, 1, 16));
    const auto a = testing::gen_table(rng, env, k, 10.0), b = testing::gen_table(rng, env, k, 10.0);
    const std::uint64_t key = rng.next();
    EXPECT_LE(sup_norm_diff(op.apply_keyed(a, key), op.apply_keyed(b, key)),
              env.gamma() * sup_norm_diff(a, b) * (1 + 1e-12) + 1e-12);
  });
}

TEST(EmpiricalOperatorTest, KeyedSweepIsReproducible) {
  const auto env = build_synthetic(3, 2, 2, 5, 8);
  EmpiricalAdaptedOperator op(env, 4, 10);
  SeededRng rng(43);
  const auto q = testing::gen_table(rng, env, 4, 1.0);
  EXPECT_TRUE(op.apply_keyed(q, 99) == op.apply_keyed(q, 99));
  EXPECT_FALSE(op.apply_keyed(q, 99) == op.apply_keyed(q, 100));
}

TEST(EmpiricalOperatorTest, RejectsZeroSamples) {
  const auto env = build_synthetic(2, 1, 1, 2, 1);
  EXPECT_THROW(EmpiricalAdaptedOperator(env, 1, 0), InvalidParameterError);
}

TEST(BoundednessTest, IteratesStayWithinQBound) {
  for_trials(30, 44, [](SeededRng& rng, int) {
    EnvShape sh = testing::gen_shape(rng);
    sh.reward_scale = 0.1 + 3.0 * rng.uniform01();
    const auto env = gen_env(rng, sh);
    const std::uint32_t k = gen_int(rng, 1, sh.n);
    ExactAdaptedOperator exact(env, k);
    EmpiricalAdaptedOperator sampled(env, k, 4);
    MeanFieldQTable a(env, k), b(env, k);
    for (int t = 0; t < 60; ++t) {
      a = exact.apply(a);
      b = sampled.apply(b, rng);
      ASSERT_LE(a.sup_norm(), env.q_bound() + 1e-9);
      ASSERT_LE(b.sup_norm(), env.q_bound() + 1e-9);
    }
  });
}

TEST(StableUpdateTest, Examples) {
  const auto env = build_synthetic(2, 2, 2, 2, 1);
  MeanFieldQTable zero(env, 2), two(env, 2);
  for (auto& v : two.values()) v = 2.0;
  EXPECT_TRUE(stable_update(zero, two, 1.0) == two);
  const auto half = stable_update(zero, two, 0.5);
  for (double v : half.values()) EXPECT_DOUBLE_EQ(v, 1.0);
  EXPECT_THROW(stable_update(zero, two, 0.0), InvalidParameterError);
  EXPECT_THROW(stable_update(zero, two, 1.5), InvalidParameterError);
  EXPECT_THROW(stable_update(zero, MeanFieldQTable(env, 1), 0.5), DimensionError);
}

TEST(StableUpdateTest, HarmonicRateReachesFixedPoint) {
  // Harmonic damping converges like t^-(1 - gamma); a small discount keeps the
  // sweep count practical.
  SeededRng rng(45);
  EnvShape sh;
  sh.L = 2;
  sh.G = 2;
  sh.A = 2;
  sh.n = 2;
  sh.deterministic = true;
  sh.gamma = 0.05;
  const auto env = gen_env(rng, sh);
  const auto fixed = adapted_fixed_point(env, 2, 1e-14).table;
  LearnOptions o;
  o.k = 2;
  o.exact = true;
  o.T = 300000;
  o.eta = EtaSchedule::harmonic();
  const auto harmonic = learn(env, o);
  o.T = 40;
  o.eta.reset();
  const auto plain = learn(env, o);
  EXPECT_LT(sup_norm_diff(*plain.table, fixed), 1e-6);
  EXPECT_LT(sup_norm_diff(*harmonic.table, fixed), 1e-6);
}

TEST(SupNormTest, Examples) {
  SeededRng rng(46);
  const auto env = build_synthetic(2, 3, 2, 4, 3);
  const auto q = testing::gen_table(rng, env, 3, 4.0);
  EXPECT_EQ(sup_norm_diff(q, q), 0.0);
  auto shifted = q;
  for (auto& v : shifted.values()) v -= 0.75;
  EXPECT_NEAR(sup_norm_diff(q, shifted), 0.75, 1e-12);
  const auto r = testing::gen_table(rng, env, 3, 4.0);
  double naive = 0.0;
  for (GlobalState s = 0; s < 3; ++s) {
    for (DistIndex d = 0; d < q.num_dists(); ++d) {
      for (Action a = 0; a < 2; ++a) naive = std::max(naive, std::abs(q.at(s, d, a) - r.at(s, d, a)));
    }
  }
  EXPECT_EQ(sup_norm_diff(q, r), naive);
  EXPECT_THROW(sup_norm_diff(q, MeanFieldQTable(env, 2)), DimensionError);
}

TEST(TableTest, SerializeRoundTripAndFingerprintCheck) {
  SeededRng rng(47);
  const auto env = build_synthetic(3, 2, 2, 4, 3);
  const auto q = testing::gen_table(rng, env, 3, 4.0);
  const auto bytes = serialize_table(q);
  EXPECT_TRUE(deserialize_table(bytes, env) == q);
  EXPECT_THROW(deserialize_table(bytes, build_synthetic(3, 2, 2, 4, 4)), FormatError);
  EXPECT_THROW(deserialize_table(bytes.substr(0, bytes.size() - 3), env), FormatError);
  EXPECT_THROW(deserialize_table("not a table", env), FormatError);
  EXPECT_EQ(checksum(bytes), checksum(serialize_table(q)));
}

TEST(TableTest, CapacityBudgetEnforced) {
  const auto env = build_demand_response({}, 8);
  EXPECT_THROW(MeanFieldQTable(env, 8), CapacityError);
  EXPECT_NO_THROW(MeanFieldQTable(env, 2));
  EXPECT_EQ(MeanFieldQTable(env, 2).size(), 5u * 1275u * 3u);
  EXPECT_THROW(MeanFieldQTable(env, 9), InvalidParameterError);
}

}  // namespace
}  // namespace subq
