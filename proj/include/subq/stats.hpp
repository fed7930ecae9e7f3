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

// Closed-form bounds and the empirical checks that measure against them.

#ifndef SUBQ_STATS_HPP_
#define SUBQ_STATS_HPP_

#include <boost/math/special_functions/beta.hpp>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "json.hpp"
#include "subq/bellman.hpp"
#include "subq/env_model.hpp"
#include "subq/errors.hpp"
#include "subq/lattice.hpp"
#include "subq/oracle.hpp"
#include "subq/rng.hpp"
#include "subq/subsample_q.hpp"

namespace subq {

// A closed-form bound, optionally paired with a measurement.
struct BoundReport {
  std::string name;
  std::vector<std::pair<std::string, double>> params;
  double value = 0.0;
  std::optional<double> measurement;
  double slack = 0.0;
  bool violation = false;

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["name"] = name;
    nlohmann::ordered_json p = nlohmann::ordered_json::object();
    for (const auto& [key, v] : params) p[key] = v;
    j["params"] = p;
    j["bound"] = value;
    j["measurement"] = measurement ? nlohmann::ordered_json(*measurement) : nlohmann::ordered_json(nullptr);
    j["slack"] = slack;
    j["violation"] = violation;
    return j;
  }
};

namespace detail {

inline void check_sample_size(std::uint64_t n, std::uint64_t k) {
  if (k == 0 || k > n) {
    throw InvalidParameterError("need 1 <= k <= n (k=" + std::to_string(k) + ", n=" + std::to_string(n) + ")");
  }
}

}  // namespace detail

// 2 L exp(-2 k n eps^2 / (n - k + 1)): the failure probability of the
// without-replacement concentration event.
inline double dkw_noreplace_failure(std::uint64_t n, std::uint64_t k, std::uint64_t L, double eps) {
  detail::check_sample_size(n, k);
  const double kn = static_cast<double>(k) * static_cast<double>(n);
  return std::exp(std::log(2.0 * static_cast<double>(L)) - 2.0 * kn * eps * eps / static_cast<double>(n - k + 1));
}

// Probability lower bound of the event; may be negative.
inline double dkw_noreplace_bound(std::uint64_t n, std::uint64_t k, std::uint64_t L, double eps) {
  return 1.0 - dkw_noreplace_failure(n, k, L, eps);
}

// Same event for k draws with replacement: 1 - 2 L exp(-2 k eps^2).
inline double dkw_replace_bound(std::uint64_t k, std::uint64_t L, double eps) {
  return 1.0 - std::exp(std::log(2.0 * static_cast<double>(L)) - 2.0 * static_cast<double>(k) * eps * eps);
}

// One-sided Clopper-Pearson limits for `successes` out of `trials`.
inline double clopper_pearson_lower(std::uint64_t successes, std::uint64_t trials, double confidence) {
  if (successes == 0) return 0.0;
  return boost::math::ibeta_inv(static_cast<double>(successes), static_cast<double>(trials - successes + 1),
                                1.0 - confidence);
}

inline double clopper_pearson_upper(std::uint64_t successes, std::uint64_t trials, double confidence) {
  if (successes >= trials) return 1.0;
  return boost::math::ibeta_inv(static_cast<double>(successes + 1), static_cast<double>(trials - successes),
                                confidence);
}

inline constexpr double kCheckConfidence = 0.99;
inline constexpr std::uint64_t kDkwChunk = 4096;

// Frequency of sup_x |F_Delta(x) - F_[n](x)| >= eps over uniform k-subsets of
// `population`. A violation is flagged only when the 99% Clopper-Pearson
// lower limit of that frequency exceeds the bound, i.e. the frequency exceeds
// the bound by more than the interval slack.
inline BoundReport mc_dkw_check(const std::vector<LocalState>& population, std::uint32_t num_states,
                                std::uint32_t k, double eps, std::uint64_t trials, SeededRng& rng,
                                unsigned jobs = 1) {
  const std::uint64_t n = population.size();
  detail::check_sample_size(n, k);
  if (trials == 0) throw InvalidParameterError("mc_dkw_check needs trials >= 1");
  if (!(eps > 0.0)) throw InvalidParameterError("mc_dkw_check needs eps > 0");
  const EmpiricalDist pop = population_dist(population, num_states);
  const std::uint64_t base = rng.next();
  const std::uint64_t chunks = (trials + kDkwChunk - 1) / kDkwChunk;
  // |c_x / k - N_x / n| >= eps  <=>  |c_x n - N_x k| >= eps k n
  const double threshold = eps * static_cast<double>(k) * static_cast<double>(n);

  auto run_chunk = [&](std::uint64_t c) {
    SeededRng r = SeededRng::derive(base, {c});
    const std::uint64_t lo = c * kDkwChunk, hi = std::min(trials, lo + kDkwChunk);
    std::vector<std::uint32_t> counts(num_states);
    std::uint64_t failures = 0;
    for (std::uint64_t t = lo; t < hi; ++t) {
      std::fill(counts.begin(), counts.end(), 0);
      for (std::size_t i : sample_subset(n, k, r)) ++counts[population[i]];
      double worst = 0.0;
      for (std::uint32_t x = 0; x < num_states; ++x) {
        const double dev = std::abs(static_cast<double>(counts[x]) * static_cast<double>(n) -
                                    static_cast<double>(pop.counts()[x]) * static_cast<double>(k));
        worst = std::max(worst, dev);
      }
      if (worst >= threshold) ++failures;
    }
    return failures;
  };

  std::vector<std::uint64_t> per_chunk(chunks, 0);
  jobs = std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(chunks)));
  if (jobs == 1) {
    for (std::uint64_t c = 0; c < chunks; ++c) per_chunk[c] = run_chunk(c);
  } else {
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < jobs; ++w) {
      pool.emplace_back([&, w] {
        for (std::uint64_t c = w; c < chunks; c += jobs) per_chunk[c] = run_chunk(c);
      });
    }
    for (auto& t : pool) t.join();
  }
  std::uint64_t failures = 0;
  for (auto f : per_chunk) failures += f;

  BoundReport rep;
  rep.name = "dkw_noreplace";
  const double freq = static_cast<double>(failures) / static_cast<double>(trials);
  const double lower = clopper_pearson_lower(failures, trials, kCheckConfidence);
  rep.value = dkw_noreplace_failure(n, k, num_states, eps);
  rep.measurement = freq;
  rep.slack = freq - lower;
  rep.violation = lower > rep.value;
  rep.params = {{"n", static_cast<double>(n)},
                {"k", static_cast<double>(k)},
                {"L", static_cast<double>(num_states)},
                {"eps", eps},
                {"trials", static_cast<double>(trials)},
                {"failures", static_cast<double>(failures)},
                {"cp_upper", clopper_pearson_upper(failures, trials, kCheckConfidence)},
                {"confidence", kCheckConfidence}};
  return rep;
}

// Deterministic cap on TV(F_Delta, F_[n]): sqrt(1 - k/n).
inline double bh_tv_bound(std::uint64_t n, std::uint64_t k) {
  detail::check_sample_size(n, k);
  return std::sqrt(1.0 - static_cast<double>(k) / static_cast<double>(n));
}

// (2 r~ / (1-gamma)^2) (sqrt((n-k+1)/(2nk) ln(2 L A sqrt(k))) + 1/sqrt(k))
//   + 2 eps_km / (1-gamma)
inline double main_bound(std::uint64_t n, std::uint64_t k, double gamma, double r_tilde, std::uint64_t L,
                         std::uint64_t A, double eps_km) {
  detail::check_sample_size(n, k);
  if (!(gamma > 0.0 && gamma < 1.0)) throw InvalidParameterError("gamma must lie in (0, 1)");
  if (r_tilde < 0.0 || eps_km < 0.0) throw InvalidParameterError("r_tilde and eps_km must be >= 0");
  const double kd = static_cast<double>(k), nd = static_cast<double>(n);
  const double log_term = std::log(2.0 * static_cast<double>(L) * static_cast<double>(A) * std::sqrt(kd));
  const double radical = std::sqrt(std::max(0.0, (nd - kd + 1.0) / (2.0 * nd * kd) * log_term));
  const double one_minus = 1.0 - gamma;
  return 2.0 * r_tilde / (one_minus * one_minus) * (radical + 1.0 / std::sqrt(kd)) + 2.0 * eps_km / one_minus;
}

struct NoiseEstimate {
  std::vector<std::uint32_t> m_list;
  std::vector<std::vector<double>> per_seed;  // [m][seed]
  std::vector<double> mean;                   // per m
  double slope = 0.0;                         // of log mean eps vs log m
  double intercept = 0.0;
};

// Least-squares slope and intercept of y on x.
inline std::pair<double, double> ols_fit(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw InvalidParameterError("ols_fit needs >= 2 paired points");
  const double mx = sample_mean(x), my = sample_mean(y);
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  if (sxx == 0.0) throw InvalidParameterError("ols_fit needs distinct x values");
  const double slope = sxy / sxx;
  return {slope, my - slope * mx};
}

// eps(m) = || Q_{k,m}^T - Q_k* ||_inf per seed, and the log-log decay slope
// of its mean over seeds.
inline NoiseEstimate estimate_bellman_noise(const EnvModel& env, std::uint32_t k,
                                            const std::vector<std::uint32_t>& m_list, int T,
                                            const std::vector<std::uint64_t>& seeds,
                                            double tol = kDefaultOracleTol) {
  if (m_list.empty() || seeds.empty()) throw InvalidParameterError("need at least one m and one seed");
  const auto fixed = adapted_fixed_point(env, k, tol);
  NoiseEstimate est;
  est.m_list = m_list;
  for (std::uint32_t m : m_list) {
    std::vector<double> eps;
    for (std::uint64_t seed : seeds) {
      LearnOptions opt;
      opt.k = k;
      opt.m = m;
      opt.T = T;
      opt.seed = seed;
      eps.push_back(sup_norm_diff(*learn(env, opt).table, fixed.table));
    }
    est.mean.push_back(sample_mean(eps));
    est.per_seed.push_back(std::move(eps));
  }
  if (m_list.size() >= 2) {
    std::vector<double> lx, ly;
    for (std::size_t i = 0; i < m_list.size(); ++i) {
      lx.push_back(std::log(static_cast<double>(m_list[i])));
      ly.push_back(std::log(std::max(est.mean[i], std::numeric_limits<double>::min())));
    }
    std::tie(est.slope, est.intercept) = ols_fit(lx, ly);
  }
  return est;
}

struct LipschitzScan {
  double max_ratio = 0.0;
  double bound = 0.0;                // 2 ||r_l||_inf / (1 - gamma)
  double max_diff_at_zero_tv = 0.0;  // pairs with TV = 0 are excluded from the ratio
  std::uint64_t pairs = 0;
  std::uint64_t violations = 0;          // TV > 0 pairs with diff > bound * TV + 1e-9
  std::uint64_t zero_tv_differences = 0; // TV = 0 pairs with diff > 1e-9 (possible only when k != k')
};

// Scans every joint state, action and pair of subsets (Delta, Delta') with
// |Delta| = k, |Delta'| = k_prime, comparing Q_k*(s_g, F_Delta, a) with
// Q_k'*(s_g, F_Delta', a) against the TV-Lipschitz bound.
inline LipschitzScan lipschitz_ratio_scan(const EnvModel& env, std::uint32_t k, std::uint32_t k_prime,
                                          double tol = kDefaultOracleTol,
                                          std::uint64_t joint_budget = kJointStateBudget) {
  const std::uint32_t n = env.num_locals(), L = env.num_local_states(), G = env.num_global_states(),
                      A = env.num_actions();
  detail::check_sample_size(n, k);
  detail::check_sample_size(n, k_prime);
  long double configs = 1.0L;
  for (std::uint32_t i = 0; i < n; ++i) configs *= L;
  if (configs * G > static_cast<long double>(joint_budget)) {
    throw CapacityError("lipschitz scan: joint state space exceeds budget");
  }
  const auto qk = adapted_fixed_point(env, k, tol).table;
  const auto qkp = k_prime == k ? qk : adapted_fixed_point(env, k_prime, tol).table;
  LipschitzScan scan;
  scan.bound = 2.0 * env.r_tilde_l() / (1.0 - env.gamma());

  std::vector<std::vector<std::size_t>> subsets_k, subsets_kp;
  for_each_subset(n, k, [&](std::span<const std::size_t> d) { subsets_k.emplace_back(d.begin(), d.end()); });
  for_each_subset(n, k_prime, [&](std::span<const std::size_t> d) { subsets_kp.emplace_back(d.begin(), d.end()); });

  std::vector<LocalState> locals(n, 0);
  const auto total = static_cast<std::uint64_t>(configs);
  for (std::uint64_t c = 0; c < total; ++c) {
    std::uint64_t rest = c;
    for (std::uint32_t i = n; i-- > 0;) {
      locals[i] = static_cast<LocalState>(rest % L);
      rest /= L;
    }
    std::vector<EmpiricalDist> fk, fkp;
    std::vector<DistIndex> rk, rkp;
    for (const auto& d : subsets_k) {
      fk.push_back(empirical_dist(locals, d, L));
      rk.push_back(qk.lattice().rank(fk.back()));
    }
    for (const auto& d : subsets_kp) {
      fkp.push_back(empirical_dist(locals, d, L));
      rkp.push_back(qkp.lattice().rank(fkp.back()));
    }
    for (std::size_t i = 0; i < fk.size(); ++i) {
      for (std::size_t j = 0; j < fkp.size(); ++j) {
        if (k == k_prime && subsets_k[i] == subsets_kp[j]) continue;
        const double tv = tv_distance(fk[i], fkp[j]);
        for (GlobalState s = 0; s < G; ++s) {
          for (Action a = 0; a < A; ++a) {
            const double diff = std::abs(qk.at(s, rk[i], a) - qkp.at(s, rkp[j], a));
            ++scan.pairs;
            if (tv == 0.0) {
              scan.max_diff_at_zero_tv = std::max(scan.max_diff_at_zero_tv, diff);
              if (diff > 1e-9) ++scan.zero_tv_differences;
              continue;
            }
            scan.max_ratio = std::max(scan.max_ratio, diff / tv);
            if (diff > scan.bound * tv + 1e-9) ++scan.violations;
          }
        }
      }
    }
  }
  return scan;
}

}  // namespace subq

#endif  // SUBQ_STATS_HPP_
