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

#include <map>
#include <set>

#include "test_support.hpp"

namespace subq {
namespace {

constexpr Action kDown = 0, kHold = 1, kUp = 2;

GlobalState signal_state(int signal) { return static_cast<GlobalState>(signal - 1); }

TEST(DemandResponseTest, Dimensions) {
  const auto env = build_demand_response({}, 8);
  EXPECT_EQ(env.num_local_states(), 50u);
  EXPECT_EQ(env.num_global_states(), 5u);
  EXPECT_EQ(env.num_actions(), 3u);
  EXPECT_EQ(env.num_locals(), 8u);
  EXPECT_DOUBLE_EQ(env.gamma(), 0.9);
}

TEST(DemandResponseTest, RewardSubstitutions) {
  const auto env = build_demand_response({}, 8);
  EXPECT_DOUBLE_EQ(env.reward_global(signal_state(3), kUp), 5.0);
  EXPECT_DOUBLE_EQ(env.reward_global(signal_state(3), kDown), 4.0);
  EXPECT_DOUBLE_EQ(env.reward_global(signal_state(1), kHold), 15.0);
  for (int psi = 1; psi <= 2; ++psi) {
    for (int d = 1; d <= 5; ++d) {
      EXPECT_DOUBLE_EQ(env.reward_local(dr::pack(5, psi, 4, d), signal_state(2)), 3.5);
      EXPECT_DOUBLE_EQ(env.reward_local(dr::pack(5, psi, 4, d), signal_state(4)), 4.0);
    }
  }
}

TEST(DemandResponseTest, SignalClampsAtBoundaries) {
  const auto env = build_demand_response({}, 2);
  EXPECT_DOUBLE_EQ(env.global_prob(signal_state(5), kUp, signal_state(5)), 1.0);
  EXPECT_DOUBLE_EQ(env.global_prob(signal_state(1), kDown, signal_state(1)), 1.0);
  EXPECT_DOUBLE_EQ(env.global_prob(signal_state(3), kUp, signal_state(4)), 1.0);
  EXPECT_DOUBLE_EQ(env.global_prob(signal_state(3), kDown, signal_state(2)), 1.0);
  EXPECT_DOUBLE_EQ(env.global_prob(signal_state(3), kHold, signal_state(3)), 1.0);
}

TEST(DemandResponseTest, PackRoundTrip) {
  std::set<std::uint32_t> seen;
  for (int psi = 1; psi <= 2; ++psi) {
    for (int c = 1; c <= 5; ++c) {
      for (int d = 1; d <= 5; ++d) {
        const auto x = dr::pack(5, psi, c, d);
        const auto u = dr::unpack(5, x);
        EXPECT_EQ(u.psi, psi);
        EXPECT_EQ(u.consumption, c);
        EXPECT_EQ(u.desire, d);
        seen.insert(x);
      }
    }
  }
  EXPECT_EQ(seen.size(), 50u);
  EXPECT_EQ(*seen.rbegin(), 49u);
}

// Written out from the model description rather than from the builder: the
// type never changes; desire drifts up by U{0,1} (type 1, clamped) or is
// redrawn uniformly (type 2); consumption becomes the old desire when that is
// within the signal, otherwise it becomes desire + (signal - consumption) *
// U{0,1}, clamped.
std::map<std::uint32_t, double> reference_dr_row(int psi, int c, int d, int signal) {
  auto clamp = [](int v) { return std::min(5, std::max(1, v)); };
  std::map<std::uint32_t, double> row;
  std::vector<std::pair<int, double>> next_c;
  if (d <= signal) {
    next_c = {{d, 1.0}};
  } else {
    next_c = {{clamp(d + (signal - c) * 0), 0.5}, {clamp(d + (signal - c) * 1), 0.5}};
  }
  std::vector<std::pair<int, double>> next_d;
  if (psi == 1) {
    next_d = {{clamp(d + 0), 0.5}, {clamp(d + 1), 0.5}};
  } else {
    for (int v = 1; v <= 5; ++v) next_d.push_back({v, 0.2});
  }
  for (auto [nc, pc] : next_c) {
    for (auto [nd, pd] : next_d) row[dr::pack(5, psi, nc, nd)] += pc * pd;
  }
  return row;
}

TEST(DemandResponseTest, LocalKernelMatchesReferenceRules) {
  const auto env = build_demand_response({}, 4);
  for (std::uint32_t x = 0; x < 50; ++x) {
    const auto u = dr::unpack(5, x);
    for (int signal = 1; signal <= 5; ++signal) {
      const auto expect = reference_dr_row(u.psi, u.consumption, u.desire, signal);
      const auto row = env.local_row(x, signal_state(signal));
      for (std::uint32_t y = 0; y < 50; ++y) {
        const double want = expect.count(y) ? expect.at(y) : 0.0;
        EXPECT_NEAR(row[y], want, 1e-15) << "x=" << x << " signal=" << signal << " y=" << y;
      }
    }
  }
}

TEST(DemandResponseTest, TypeIsInvariant) {
  const auto env = build_demand_response({}, 4);
  for (std::uint32_t x = 0; x < 50; ++x) {
    for (GlobalState s = 0; s < 5; ++s) {
      for (std::uint32_t y = 0; y < 50; ++y) {
        if (env.local_prob(x, s, y) > 0.0) {
          EXPECT_EQ(dr::unpack(5, x).psi, dr::unpack(5, y).psi);
        }
      }
    }
  }
}

TEST(DemandResponseTest, BoundedBranching) {
  const auto env = build_demand_response({}, 4);
  for (std::uint32_t x = 0; x < 50; ++x) {
    for (GlobalState s = 0; s < 5; ++s) EXPECT_LE(env.local_row_nonzeros(x, s), 4u * 5u);
  }
}

TEST(DemandResponseTest, RejectsBadParameters) {
  EXPECT_THROW(build_demand_response({}, 0), InvalidParameterError);
  DemandResponseParams p;
  p.levels = 0;
  EXPECT_THROW(build_demand_response(p, 3), InvalidParameterError);
}

TEST(QueueingTest, TargetedQueueTransitions) {
  const auto env = build_queueing({}, 4);
  ASSERT_TRUE(env.has_coupling());
  // Queue 2 is targeted in global state 2.
  EXPECT_EQ(env.target_agent(2), 2);
  EXPECT_NEAR(env.targeted_row(5, 2)[5], 0.8, 1e-15);
  EXPECT_NEAR(env.targeted_row(5, 2)[6], 0.2, 1e-15);
  EXPECT_NEAR(env.local_row(5, 2)[4], 0.8, 1e-15);
  EXPECT_NEAR(env.local_row(5, 2)[5], 0.2, 1e-15);
  EXPECT_DOUBLE_EQ(env.local_row(0, 1)[0], 1.0);
  EXPECT_DOUBLE_EQ(env.targeted_row(30, 1)[30], 1.0);
}

TEST(QueueingTest, RewardsAndGlobalMoves) {
  const auto env = build_queueing({}, 4);
  EXPECT_EQ(env.num_local_states(), 31u);
  for (GlobalState s = 0; s < 4; ++s) {
    EXPECT_DOUBLE_EQ(env.reward_local(7, s), -7.0);
    for (Action a = 0; a < 4; ++a) {
      EXPECT_DOUBLE_EQ(env.reward_global(s, a), 0.0);
      EXPECT_DOUBLE_EQ(env.global_prob(s, a, a), 1.0);
    }
  }
  EXPECT_DOUBLE_EQ(env.r_tilde_l(), 30.0);
}

TEST(QueueingTest, BirthDeathSupport) {
  QueueingParams p;
  p.capacity = 6;
  for (bool unclamped : {false, true}) {
    p.unclamped = unclamped;
    const auto env = build_queueing(p, 3);
    const std::uint32_t L = env.num_local_states();
    for (std::uint32_t x = 0; x < L; ++x) {
      for (GlobalState s = 0; s < 3; ++s) {
        for (const auto row : {env.local_row(x, s), env.targeted_row(x, s)}) {
          for (std::uint32_t y = 0; y < L; ++y) {
            if (row[y] > 0.0) {
              EXPECT_LE(y, x + 1);
              EXPECT_LE(x, y + 1);
            }
          }
        }
      }
    }
  }
}

TEST(QueueingTest, UnclampedOverflowPenalty) {
  QueueingParams p;
  p.capacity = 3;
  p.unclamped = true;
  const auto env = build_queueing(p, 2);
  EXPECT_EQ(env.num_local_states(), 5u);
  EXPECT_DOUBLE_EQ(env.reward_local(3, 0), -3.0);
  EXPECT_DOUBLE_EQ(env.reward_local(4, 0), -14.0);
  EXPECT_NEAR(env.targeted_row(3, 0)[4], 0.2, 1e-15);
}

TEST(QueueingTest, RejectsBadParameters) {
  QueueingParams p;
  p.service_prob = 1.0;
  EXPECT_THROW(build_queueing(p, 3), InvalidParameterError);
  p = {};
  p.capacity = 0;
  EXPECT_THROW(build_queueing(p, 3), InvalidParameterError);
}

TEST(SyntheticTest, ReproducibleAndBounded) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto a = build_synthetic(3, 2, 2, 4, seed, 2.5);
    EXPECT_EQ(a.fingerprint(), build_synthetic(3, 2, 2, 4, seed, 2.5).fingerprint());
    EXPECT_LE(a.r_tilde(), 2.0 * 2.5);
    for (std::uint32_t x = 0; x < 3; ++x) {
      for (GlobalState s = 0; s < 2; ++s) {
        double sum = 0.0;
        for (double p : a.local_row(x, s)) sum += p;
        EXPECT_NEAR(sum, 1.0, 1e-12);
      }
    }
    for (double r : a.spec().reward_local) {
      EXPECT_GE(r, 0.0);
      EXPECT_LE(r, 2.5);
    }
  }
  EXPECT_THROW(build_synthetic(0, 1, 1, 1, 0), InvalidParameterError);
}

}  // namespace
}  // namespace subq
