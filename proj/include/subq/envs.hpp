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

// Built-in environments: demand response, indexed queue dispatch, and seeded
// random models used as oracle fixtures.

#ifndef SUBQ_ENVS_HPP_
#define SUBQ_ENVS_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "subq/env_model.hpp"
#include "subq/rng.hpp"

namespace subq {

// Demand response: the global agent sets a consumption target in {1..levels}
// and nudges it by -1/0/+1 per step. Each local agent carries a fixed type
// psi in {1,2}, its consumption c and its desired consumption d, all packed
// into one local index.
struct DemandResponseParams {
  int levels = 5;  // D_a = D_c = {1, ..., levels}
  double gamma = 0.9;
};

// Queue dispatch: global state and action both name a queue in [0, n). The
// queue named by the current global state receives one job; every queue
// finishes a job with probability service_prob; lengths are clipped to
// [0, capacity]. With `unclamped`, lengths are clipped at capacity + 1 instead
// so that the overflow penalty can fire.
struct QueueingParams {
  int capacity = 30;
  double service_prob = 0.8;
  double overflow_penalty = 10.0;
  bool unclamped = false;
  double gamma = 0.9;
};

namespace dr {

inline constexpr int kNumTypes = 2;

inline std::uint32_t pack(int levels, int psi, int consumption, int desire) {
  return static_cast<std::uint32_t>(((psi - 1) * levels + (consumption - 1)) * levels + (desire - 1));
}

struct Unpacked {
  int psi, consumption, desire;
};

inline Unpacked unpack(int levels, std::uint32_t x) {
  const int desire = static_cast<int>(x % levels) + 1;
  const int consumption = static_cast<int>((x / levels) % levels) + 1;
  const int psi = static_cast<int>(x / (levels * levels)) + 1;
  return {psi, consumption, desire};
}

// Action index 0, 1, 2 <-> signal change -1, 0, +1.
inline int signal_delta(Action a) { return static_cast<int>(a) - 1; }

}  // namespace dr

inline EnvModel build_demand_response(const DemandResponseParams& params, std::uint32_t n) {
  if (n == 0) throw InvalidParameterError("demand response needs n >= 1");
  if (params.levels < 1) throw InvalidParameterError("demand response needs levels >= 1");
  const int V = params.levels;
  const std::size_t G = V, A = 3, L = static_cast<std::size_t>(dr::kNumTypes) * V * V;
  auto clamp = [V](int v) { return std::clamp(v, 1, V); };

  EnvSpec spec;
  spec.name = "demand_response";
  spec.spaces = {static_cast<std::uint32_t>(G), static_cast<std::uint32_t>(A), n};
  spec.gamma = params.gamma;
  for (std::uint32_t x = 0; x < L; ++x) {
    const auto u = dr::unpack(V, x);
    spec.local_space.labels.push_back("psi=" + std::to_string(u.psi) + ",c=" + std::to_string(u.consumption) +
                                      ",d=" + std::to_string(u.desire));
  }

  spec.global_kernel.assign(G * A * G, 0.0);
  spec.reward_global.assign(G * A, 0.0);
  for (std::size_t s = 0; s < G; ++s) {
    const int signal = static_cast<int>(s) + 1;
    for (Action a = 0; a < A; ++a) {
      const int next = clamp(signal + dr::signal_delta(a));
      spec.global_kernel[(s * A + a) * G + (next - 1)] = 1.0;
      spec.reward_global[s * A + a] = 15.0 / signal - (dr::signal_delta(a) == -1 ? 1.0 : 0.0);
    }
  }

  spec.local_kernel.assign(L * G * L, 0.0);
  spec.reward_local.assign(L * G, 0.0);
  for (std::uint32_t x = 0; x < L; ++x) {
    const auto u = dr::unpack(V, x);
    for (std::size_t s = 0; s < G; ++s) {
      const int signal = static_cast<int>(s) + 1;
      spec.reward_local[x * G + s] = u.consumption - (u.consumption > signal ? 0.5 : 0.0);

      // Desire fluctuation.
      std::vector<std::pair<int, double>> desires;
      if (u.psi == 1) {
        desires = {{clamp(u.desire), 0.5}, {clamp(u.desire + 1), 0.5}};
      } else {
        for (int v = 1; v <= V; ++v) desires.emplace_back(v, 1.0 / V);
      }
      // Consumption follows the desire when it is within the signal, else it
      // either keeps the desire or moves by the signal/consumption gap.
      std::vector<std::pair<int, double>> consumptions;
      if (u.desire <= signal) {
        consumptions = {{u.desire, 1.0}};
      } else {
        consumptions = {{clamp(u.desire), 0.5}, {clamp(u.desire + (signal - u.consumption)), 0.5}};
      }
      for (auto [c, pc] : consumptions) {
        for (auto [d, pd] : desires) {
          spec.local_kernel[(x * G + s) * L + dr::pack(V, u.psi, c, d)] += pc * pd;
        }
      }
    }
  }
  return EnvModel(std::move(spec));
}

inline EnvModel build_queueing(const QueueingParams& params, std::uint32_t n) {
  if (n == 0) throw InvalidParameterError("queueing needs n >= 1");
  if (params.capacity < 1) throw InvalidParameterError("queueing needs capacity >= 1");
  if (!(params.service_prob > 0.0 && params.service_prob < 1.0)) {
    throw InvalidParameterError("queueing needs service probability in (0, 1)");
  }
  const int cap = params.capacity + (params.unclamped ? 1 : 0);
  const std::size_t G = n, A = n, L = static_cast<std::size_t>(cap) + 1;
  const double p = params.service_prob;

  EnvSpec spec;
  spec.name = "queueing";
  spec.spaces = {n, n, n};
  spec.gamma = params.gamma;
  spec.local_space = LocalStateSpace::numbered(L);

  spec.global_kernel.assign(G * A * G, 0.0);
  for (std::size_t s = 0; s < G; ++s) {
    for (std::size_t a = 0; a < A; ++a) spec.global_kernel[(s * A + a) * G + a] = 1.0;
  }
  spec.reward_global.assign(G * A, 0.0);

  TargetCoupling coupling;
  coupling.target_agent.resize(G);
  for (std::size_t s = 0; s < G; ++s) coupling.target_agent[s] = static_cast<std::int32_t>(s);
  coupling.kernel.assign(L * G * L, 0.0);
  spec.local_kernel.assign(L * G * L, 0.0);
  spec.reward_local.assign(L * G, 0.0);
  auto clip = [cap](int v) { return static_cast<std::size_t>(std::clamp(v, 0, cap)); };
  for (std::size_t x = 0; x < L; ++x) {
    const int len = static_cast<int>(x);
    for (std::size_t s = 0; s < G; ++s) {
      const std::size_t row = (x * G + s) * L;
      spec.local_kernel[row + clip(len - 1)] += p;
      spec.local_kernel[row + clip(len)] += 1.0 - p;
      coupling.kernel[row + clip(len)] += p;
      coupling.kernel[row + clip(len + 1)] += 1.0 - p;
      spec.reward_local[x * G + s] = -len - (len > params.capacity ? params.overflow_penalty : 0.0);
    }
  }
  spec.coupling = std::move(coupling);
  return EnvModel(std::move(spec));
}

// Seeded random model: kernel rows are Dirichlet(1,...,1) draws, rewards are
// uniform in [0, reward_scale].
inline EnvModel build_synthetic(std::uint32_t num_local_states, std::uint32_t num_global_states,
                                std::uint32_t num_actions, std::uint32_t n, std::uint64_t seed,
                                double reward_scale = 1.0, double gamma = 0.9) {
  if (num_local_states == 0 || num_global_states == 0 || num_actions == 0 || n == 0) {
    throw InvalidParameterError("synthetic model dimensions must be >= 1");
  }
  const std::size_t G = num_global_states, A = num_actions, L = num_local_states;
  SeededRng rng(seed);
  auto dirichlet_rows = [&rng](std::vector<double>& out, std::size_t rows, std::size_t len) {
    out.assign(rows * len, 0.0);
    for (std::size_t r = 0; r < rows; ++r) {
      double sum = 0.0;
      for (std::size_t j = 0; j < len; ++j) {
        const double e = -std::log1p(-rng.uniform01());
        out[r * len + j] = e;
        sum += e;
      }
      for (std::size_t j = 0; j < len; ++j) out[r * len + j] /= sum;
    }
  };

  EnvSpec spec;
  spec.name = "synthetic";
  spec.spaces = {num_global_states, num_actions, n};
  spec.gamma = gamma;
  spec.local_space = LocalStateSpace::numbered(L);
  dirichlet_rows(spec.global_kernel, G * A, G);
  dirichlet_rows(spec.local_kernel, L * G, L);
  spec.reward_global.resize(G * A);
  for (auto& r : spec.reward_global) r = reward_scale * rng.uniform01();
  spec.reward_local.resize(L * G);
  for (auto& r : spec.reward_local) r = reward_scale * rng.uniform01();
  return EnvModel(std::move(spec));
}

}  // namespace subq

#endif  // SUBQ_ENVS_HPP_
