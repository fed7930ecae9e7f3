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

// JSON environment descriptions.
//
// Every description carries a "preset" key:
//
//   {"preset": "demand_response", "n": 8, "levels": 5, "gamma": 0.9}
//   {"preset": "queueing", "n": 8, "capacity": 30, "service_prob": 0.8,
//    "overflow_penalty": 10, "unclamped": false, "gamma": 0.9}
//   {"preset": "synthetic", "n": 3, "num_local_states": 2,
//    "num_global_states": 2, "num_actions": 2, "seed": 1,
//    "reward_scale": 1.0, "gamma": 0.9}
//   {"preset": "custom", "name": "...", "n": 3, "gamma": 0.9,
//    "local_labels": ["a", "b"],
//    "global_kernel": [[[...]]],   // [s_g][a][s_g']
//    "local_kernel": [[[...]]],    // [x][s_g][x']
//    "reward_global": [[...]],     // [s_g][a]
//    "reward_local": [[...]],      // [x][s_g]
//    "coupling": {"target_agent": [...], "kernel": [[[...]]]},  // optional
//    "renormalize": false}
//
// Unknown keys are rejected. env_to_json writes the "custom" form, which
// reproduces the model exactly.

#ifndef SUBQ_ENV_CONFIG_HPP_
#define SUBQ_ENV_CONFIG_HPP_

#include <cstdint>
#include <fstream>
#include <functional>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"
#include "subq/env_model.hpp"
#include "subq/envs.hpp"
#include "subq/errors.hpp"

namespace subq {

using Json = nlohmann::ordered_json;

namespace detail {

inline void check_keys(const Json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw FormatError(where + " must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (!allowed.count(key)) throw FormatError(where + ": unknown key '" + key + "'");
  }
}

template <typename T>
T get_or(const Json& j, const std::string& key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("key '" + key + "': " + e.what());
  }
}

template <typename T>
T require(const Json& j, const std::string& key) {
  if (!j.contains(key)) throw FormatError("missing key '" + key + "'");
  return get_or<T>(j, key, T{});
}

inline const Json& node(const Json& j, const std::string& key) {
  if (!j.contains(key)) throw FormatError("missing key '" + key + "'");
  return j.at(key);
}

// Flattens a nested array with the given extents, row-major.
inline std::vector<double> flatten(const Json& j, const std::vector<std::size_t>& dims, const std::string& key) {
  std::vector<double> out;
  std::function<void(const Json&, std::size_t)> rec = [&](const Json& node, std::size_t depth) {
    if (depth == dims.size()) {
      if (!node.is_number()) throw FormatError("'" + key + "' holds a non-number");
      out.push_back(node.get<double>());
      return;
    }
    if (!node.is_array() || node.size() != dims[depth]) {
      throw FormatError("'" + key + "' has the wrong shape at depth " + std::to_string(depth) + " (expected " +
                        std::to_string(dims[depth]) + ")");
    }
    for (const auto& child : node) rec(child, depth + 1);
  };
  rec(j, 0);
  return out;
}

inline Json nest(const std::vector<double>& flat, const std::vector<std::size_t>& dims) {
  std::size_t pos = 0;
  std::function<Json(std::size_t)> rec = [&](std::size_t depth) {
    if (depth == dims.size()) return Json(flat[pos++]);
    Json arr = Json::array();
    for (std::size_t i = 0; i < dims[depth]; ++i) arr.push_back(rec(depth + 1));
    return arr;
  };
  return rec(0);
}

}  // namespace detail

// Builds a model from a description. `n_override`, when set, replaces "n".
inline EnvModel env_from_json(const Json& j, std::optional<std::uint32_t> n_override = std::nullopt) {
  if (!j.is_object()) throw FormatError("environment description must be a JSON object");
  const std::string preset = detail::require<std::string>(j, "preset");
  const auto n = n_override ? *n_override : detail::require<std::uint32_t>(j, "n");
  if (preset == "demand_response") {
    detail::check_keys(j, {"preset", "n", "levels", "gamma"}, "demand_response");
    DemandResponseParams p;
    p.levels = detail::get_or(j, "levels", p.levels);
    p.gamma = detail::get_or(j, "gamma", p.gamma);
    return build_demand_response(p, n);
  }
  if (preset == "queueing") {
    detail::check_keys(j, {"preset", "n", "capacity", "service_prob", "overflow_penalty", "unclamped", "gamma"},
                       "queueing");
    QueueingParams p;
    p.capacity = detail::get_or(j, "capacity", p.capacity);
    p.service_prob = detail::get_or(j, "service_prob", p.service_prob);
    p.overflow_penalty = detail::get_or(j, "overflow_penalty", p.overflow_penalty);
    p.unclamped = detail::get_or(j, "unclamped", p.unclamped);
    p.gamma = detail::get_or(j, "gamma", p.gamma);
    return build_queueing(p, n);
  }
  if (preset == "synthetic") {
    detail::check_keys(j,
                       {"preset", "n", "num_local_states", "num_global_states", "num_actions", "seed",
                        "reward_scale", "gamma"},
                       "synthetic");
    return build_synthetic(detail::get_or<std::uint32_t>(j, "num_local_states", 2),
                           detail::get_or<std::uint32_t>(j, "num_global_states", 2),
                           detail::get_or<std::uint32_t>(j, "num_actions", 2), n,
                           detail::get_or<std::uint64_t>(j, "seed", 0), detail::get_or(j, "reward_scale", 1.0),
                           detail::get_or(j, "gamma", 0.9));
  }
  if (preset == "custom") {
    detail::check_keys(j,
                       {"preset", "name", "n", "gamma", "local_labels", "global_kernel", "local_kernel",
                        "reward_global", "reward_local", "coupling", "renormalize"},
                       "custom");
    EnvSpec spec;
    spec.name = detail::get_or<std::string>(j, "name", "custom");
    spec.gamma = detail::require<double>(j, "gamma");
    spec.local_space.labels = detail::require<std::vector<std::string>>(j, "local_labels");
    const Json& gk = detail::node(j, "global_kernel");
    if (!gk.is_array() || gk.empty() || !gk[0].is_array() || gk[0].empty()) {
      throw FormatError("'global_kernel' must be a non-empty [s_g][a][s_g'] array");
    }
    const std::size_t G = gk.size(), A = gk[0].size(), L = spec.local_space.size();
    spec.spaces = {static_cast<std::uint32_t>(G), static_cast<std::uint32_t>(A), n};
    spec.global_kernel = detail::flatten(gk, {G, A, G}, "global_kernel");
    spec.local_kernel = detail::flatten(detail::node(j, "local_kernel"), {L, G, L}, "local_kernel");
    spec.reward_global = detail::flatten(detail::node(j, "reward_global"), {G, A}, "reward_global");
    spec.reward_local = detail::flatten(detail::node(j, "reward_local"), {L, G}, "reward_local");
    if (j.contains("coupling")) {
      const Json& c = j.at("coupling");
      detail::check_keys(c, {"target_agent", "kernel"}, "coupling");
      TargetCoupling tc;
      tc.target_agent = detail::require<std::vector<std::int32_t>>(c, "target_agent");
      tc.kernel = detail::flatten(detail::node(c, "kernel"), {L, G, L}, "coupling.kernel");
      spec.coupling = std::move(tc);
    }
    if (detail::get_or(j, "renormalize", false)) spec.renormalize();
    return EnvModel(std::move(spec));
  }
  throw FormatError("unknown preset '" + preset + "'");
}

inline Json env_to_json(const EnvModel& env) {
  const auto& s = env.spec();
  const std::size_t G = env.num_global_states(), A = env.num_actions(), L = env.num_local_states();
  Json j;
  j["preset"] = "custom";
  j["name"] = s.name;
  j["n"] = env.num_locals();
  j["gamma"] = s.gamma;
  j["local_labels"] = s.local_space.labels;
  j["global_kernel"] = detail::nest(s.global_kernel, {G, A, G});
  j["local_kernel"] = detail::nest(s.local_kernel, {L, G, L});
  j["reward_global"] = detail::nest(s.reward_global, {G, A});
  j["reward_local"] = detail::nest(s.reward_local, {L, G});
  if (s.coupling) {
    Json c;
    c["target_agent"] = s.coupling->target_agent;
    c["kernel"] = detail::nest(s.coupling->kernel, {L, G, L});
    j["coupling"] = c;
  }
  return j;
}

inline Json read_json_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw Error("cannot open " + path);
  try {
    return Json::parse(f);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path + ": " + e.what());
  }
}

}  // namespace subq

#endif  // SUBQ_ENV_CONFIG_HPP_
