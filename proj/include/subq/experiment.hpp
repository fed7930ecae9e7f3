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

// Run orchestration behind the command-line tool. Every command writes its
// data files into `out` and a sidecar `metadata.json` holding wall-clock
// timestamps, host information and per-row timings. Data files depend only
// on the configuration and seeds; the one exception is the `wall_ms` column
// that the gap-sweep and bench schemas carry.

#ifndef SUBQ_EXPERIMENT_HPP_
#define SUBQ_EXPERIMENT_HPP_

#include <unistd.h>

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "subq/env_config.hpp"
#include "subq/errors.hpp"
#include "subq/oracle.hpp"
#include "subq/q_table.hpp"
#include "subq/stats.hpp"
#include "subq/subsample_q.hpp"

namespace subq {

// Keys of the experiment file, one per command-line flag of the same name.
struct ExperimentConfig {
  Json env = Json{{"preset", "synthetic"}};
  std::uint32_t n = 4;
  std::vector<std::uint32_t> k = {1};
  std::uint32_t m = 10;
  int T = 50;
  int T_prime = 100;
  std::uint64_t episodes = 200;
  std::vector<std::uint64_t> seeds = {0};
  bool exact_oracle = true;    // use the joint-MDP oracle for gaps when it fits
  bool exact_learning = false; // use T_k instead of T_{k,m}
  int repetitions = 5;         // bench only
  unsigned jobs = 1;
  std::string out = "out";
  std::string table;           // execute: load this table instead of learning

  void validate() const {
    if (n == 0) throw InvalidParameterError("n must be >= 1");
    if (k.empty()) throw InvalidParameterError("k list is empty");
    for (auto kk : k) {
      if (kk == 0 || kk > n) throw InvalidParameterError("every k must lie in [1, n]; got " + std::to_string(kk));
    }
    if (m == 0 || T < 1 || T_prime < 0 || episodes == 0 || repetitions < 1 || jobs == 0) {
      throw InvalidParameterError("m, T, episodes, repetitions and jobs must be positive; T_prime >= 0");
    }
    if (seeds.empty()) throw InvalidParameterError("seed list is empty");
  }

  EnvModel build_env() const { return env_from_json(env, n); }

  Json to_json() const {
    Json j;
    j["env"] = env;
    j["n"] = n;
    j["k"] = k;
    j["m"] = m;
    j["T"] = T;
    j["T_prime"] = T_prime;
    j["episodes"] = episodes;
    j["seeds"] = seeds;
    j["exact_oracle"] = exact_oracle;
    j["exact_learning"] = exact_learning;
    j["repetitions"] = repetitions;
    j["jobs"] = jobs;
    j["out"] = out;
    if (!table.empty()) j["table"] = table;
    return j;
  }
};

inline ExperimentConfig experiment_from_json(const Json& j) {
  detail::check_keys(j,
                     {"env", "n", "k", "m", "T", "T_prime", "episodes", "seeds", "exact_oracle", "exact_learning",
                      "repetitions", "jobs", "out", "table"},
                     "experiment");
  ExperimentConfig c;
  if (j.contains("env")) c.env = j.at("env");
  c.n = detail::get_or(j, "n", c.n);
  if (j.contains("k")) {
    c.k = j.at("k").is_array() ? detail::get_or(j, "k", c.k)
                               : std::vector<std::uint32_t>{detail::require<std::uint32_t>(j, "k")};
  }
  c.m = detail::get_or(j, "m", c.m);
  c.T = detail::get_or(j, "T", c.T);
  c.T_prime = detail::get_or(j, "T_prime", c.T_prime);
  c.episodes = detail::get_or(j, "episodes", c.episodes);
  c.seeds = detail::get_or(j, "seeds", c.seeds);
  c.exact_oracle = detail::get_or(j, "exact_oracle", c.exact_oracle);
  c.exact_learning = detail::get_or(j, "exact_learning", c.exact_learning);
  c.repetitions = detail::get_or(j, "repetitions", c.repetitions);
  c.jobs = detail::get_or(j, "jobs", c.jobs);
  c.out = detail::get_or(j, "out", c.out);
  c.table = detail::get_or(j, "table", c.table);
  return c;
}

inline constexpr char kGapSweepCsvHeader[] = "env,n,k,m,T,T_prime,seed,return_mean,return_se,gap,gap_mode,wall_ms";
inline constexpr char kGapSummaryCsvHeader[] = "env,n,k,rows,gap_mean,gap_se,return_mean,return_se";
inline constexpr char kLearnCsvHeader[] = "env,n,k,m,T,seed,iterations,final_residual,table_entries,max_abs_q,checksum,table";
inline constexpr char kBenchCsvHeader[] = "env,n,k,m,T,rep,dists,table_entries,wall_ms,status";

namespace detail {

inline std::string csv_double(double v) {
  if (std::isnan(v)) return "nan";
  return format_double(v);
}

inline std::string hex64(std::uint64_t v) {
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

inline std::string utc_timestamp() {
  const std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline std::string hostname() {
  char buf[256] = {0};
  if (gethostname(buf, sizeof buf - 1) != 0) return "unknown";
  return buf;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open " + path.string() + " for writing");
  f << text;
  if (!f) throw Error("failed writing " + path.string());
}

// Runs f(i) for i in [0, count) on `jobs` threads. Exceptions are rethrown
// after all workers finish.
inline void parallel_for(std::size_t count, unsigned jobs, const std::function<void(std::size_t)>& f) {
  jobs = std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(std::max<std::size_t>(count, 1))));
  if (jobs == 1) {
    for (std::size_t i = 0; i < count; ++i) f(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mu;
  std::vector<std::thread> pool;
  for (unsigned w = 0; w < jobs; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) {
        try {
          f(i);
        } catch (...) {
          std::lock_guard lock(error_mu);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

inline double elapsed_ms(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace detail

// Sidecar metadata: everything that may differ between identical runs.
struct RunMetadata {
  std::string command;
  Json config;
  Json timings = Json::array();
  Json notes = Json::object();
  std::string started_at = detail::utc_timestamp();
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();

  void write(const std::filesystem::path& dir) const {
    Json j;
    j["command"] = command;
    j["started_at"] = started_at;
    j["finished_at"] = detail::utc_timestamp();
    j["host"] = detail::hostname();
    j["hardware_threads"] = std::thread::hardware_concurrency();
    j["total_wall_ms"] = detail::elapsed_ms(start);
    j["config"] = config;
    j["notes"] = notes;
    j["timings"] = timings;
    detail::write_text(dir / "metadata.json", j.dump(2) + "\n");
  }
};

inline std::filesystem::path prepare_out(const ExperimentConfig& cfg) {
  std::filesystem::path dir(cfg.out);
  std::filesystem::create_directories(dir);
  return dir;
}

inline std::string table_filename(std::uint32_t k, std::uint64_t seed) {
  return "table_k" + std::to_string(k) + "_seed" + std::to_string(seed) + ".bin";
}

// The initial state of execution runs: uniform, from a stream keyed by seed.
inline JointState initial_state_for(const EnvModel& env, std::uint64_t seed) {
  SeededRng rng = SeededRng::derive(seed, {0x696e6974ULL});
  return sample_uniform_joint_state(env, rng);
}

inline LearnOptions learn_options(const ExperimentConfig& cfg, std::uint32_t k, std::uint64_t seed) {
  LearnOptions o;
  o.k = k;
  o.m = cfg.m;
  o.T = cfg.T;
  o.seed = seed;
  o.exact = cfg.exact_learning;
  return o;
}

// learn: one table per (k, seed) plus learn.csv.
inline void cmd_learn(const ExperimentConfig& cfg) {
  cfg.validate();
  const auto dir = prepare_out(cfg);
  const EnvModel env = cfg.build_env();
  RunMetadata meta{"learn", cfg.to_json()};
  struct Job {
    std::uint32_t k;
    std::uint64_t seed;
  };
  std::vector<Job> jobs;
  for (auto k : cfg.k) {
    for (auto s : cfg.seeds) jobs.push_back({k, s});
  }
  std::vector<std::string> rows(jobs.size());
  std::vector<double> wall(jobs.size());
  detail::parallel_for(jobs.size(), cfg.jobs, [&](std::size_t i) {
    const auto [k, seed] = jobs[i];
    const auto res = learn(env, learn_options(cfg, k, seed));
    const std::string bytes = serialize_table(*res.table);
    const std::string name = table_filename(k, seed);
    detail::write_text(dir / name, bytes);
    std::ostringstream row;
    row << env.name() << ',' << env.num_locals() << ',' << k << ',' << res.report.m << ',' << cfg.T << ',' << seed
        << ',' << res.report.iterations << ',' << detail::csv_double(res.report.final_residual) << ','
        << res.report.table_entries << ',' << detail::csv_double(res.report.max_abs_q) << ','
        << detail::hex64(checksum(bytes)) << ',' << name;
    rows[i] = row.str();
    wall[i] = res.report.wall_ms;
  });
  std::string csv = std::string(kLearnCsvHeader) + "\n";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    csv += rows[i] + "\n";
    meta.timings.push_back({{"k", jobs[i].k}, {"seed", jobs[i].seed}, {"wall_ms", wall[i]}});
  }
  detail::write_text(dir / "learn.csv", csv);
  meta.write(dir);
}

// execute: one trajectory CSV per (k, seed).
inline void cmd_execute(const ExperimentConfig& cfg) {
  cfg.validate();
  const auto dir = prepare_out(cfg);
  const EnvModel env = cfg.build_env();
  RunMetadata meta{"execute", cfg.to_json()};
  meta.notes["initial_state"] = "uniform over S_g x S_l^n, drawn per seed";
  struct Job {
    std::uint32_t k;
    std::uint64_t seed;
  };
  std::vector<Job> jobs;
  for (auto k : cfg.k) {
    for (auto s : cfg.seeds) jobs.push_back({k, s});
  }
  std::vector<double> totals(jobs.size());
  detail::parallel_for(jobs.size(), cfg.jobs, [&](std::size_t i) {
    const auto [k, seed] = jobs[i];
    std::shared_ptr<const MeanFieldQTable> table;
    if (!cfg.table.empty()) {
      table = std::make_shared<const MeanFieldQTable>(load_table(cfg.table, env));
      if (table->k() != k) throw PolicyError("loaded table has k=" + std::to_string(table->k()));
    } else {
      table = learn(env, learn_options(cfg, k, seed)).table;
    }
    StochasticSubsamplePolicy policy(GreedyMeanFieldPolicy(table), env.num_locals());
    const auto traj = execute(env, policy, cfg.T_prime, seed, initial_state_for(env, seed));
    std::ostringstream os;
    write_trajectory_csv(traj, os);
    detail::write_text(dir / ("trajectory_k" + std::to_string(k) + "_seed" + std::to_string(seed) + ".csv"),
                       os.str());
    totals[i] = traj.total_return();
  });
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    meta.timings.push_back({{"k", jobs[i].k}, {"seed", jobs[i].seed}, {"return", totals[i]}});
  }
  meta.write(dir);
}

struct GapRow {
  std::uint32_t k = 0;
  std::uint64_t seed = 0;
  double return_mean = std::numeric_limits<double>::quiet_NaN();
  double return_se = std::numeric_limits<double>::quiet_NaN();
  double gap = std::numeric_limits<double>::quiet_NaN();
  std::string gap_mode = "unavailable";
  double wall_ms = 0.0;
  std::string error;
};

// gap-sweep: for every (k, seed) learn, estimate the return of the sampled
// policy by Monte Carlo rollouts from uniform initial states, and measure the
// gap against pi* (exact oracle) or against the k = n policy (proxy).
inline std::vector<GapRow> cmd_gap_sweep(const ExperimentConfig& cfg) {
  cfg.validate();
  const auto dir = prepare_out(cfg);
  const EnvModel env = cfg.build_env();
  RunMetadata meta{"gap-sweep", cfg.to_json()};
  meta.notes["initial_state"] = "uniform over S_g x S_l^n; gaps are averaged over it";

  std::optional<GapOracle> oracle;
  if (cfg.exact_oracle) {
    try {
      oracle.emplace(env);
    } catch (const CapacityError& e) {
      meta.notes["oracle"] = std::string("exact oracle unavailable: ") + e.what();
    }
  }
  const std::uint32_t n = env.num_locals();
  const bool proxy_possible =
      !oracle && static_cast<long double>(lattice_size(n, env.num_local_states())) * env.num_global_states() *
                         env.num_actions() <=
                     static_cast<long double>(kDefaultTableEntryBudget);
  if (!oracle && !proxy_possible) meta.notes["proxy"] = "k = n table exceeds the entry budget; gaps unavailable";

  auto uniform = [&env](SeededRng& rng) { return sample_uniform_joint_state(env, rng); };
  auto mc_value = [&](const GreedyMeanFieldPolicy& greedy, std::uint64_t seed) {
    StochasticSubsamplePolicy policy(greedy, n);
    return mc_policy_value(env, [&policy](const JointState& s, SeededRng& rng) { return policy.act(s, rng); },
                           uniform, cfg.T_prime, cfg.episodes, seed);
  };

  // Proxy baseline per seed: the k = n policy learned with the same seed.
  std::vector<double> proxy_value(cfg.seeds.size(), std::numeric_limits<double>::quiet_NaN());
  if (proxy_possible) {
    detail::parallel_for(cfg.seeds.size(), cfg.jobs, [&](std::size_t i) {
      const auto res = learn(env, learn_options(cfg, n, cfg.seeds[i]));
      proxy_value[i] = mc_value(res.policy, cfg.seeds[i]).mean;
    });
  }

  std::vector<GapRow> rows;
  for (auto k : cfg.k) {
    for (auto s : cfg.seeds) {
      GapRow row;
      row.k = k;
      row.seed = s;
      rows.push_back(row);
    }
  }
  detail::parallel_for(rows.size(), cfg.jobs, [&](std::size_t i) {
    GapRow& row = rows[i];
    try {
      const auto start = std::chrono::steady_clock::now();
      const auto res = learn(env, learn_options(cfg, row.k, row.seed));
      row.wall_ms = detail::elapsed_ms(start);
      const auto v = mc_value(res.policy, row.seed);
      row.return_mean = v.mean;
      row.return_se = v.se;
      if (oracle) {
        row.gap = oracle->average(oracle->v_star(), std::nullopt) -
                  oracle->average(oracle->values_of(res.policy), std::nullopt);
        row.gap_mode = "exact_pi_star";
      } else if (proxy_possible) {
        const std::size_t si = static_cast<std::size_t>(i % cfg.seeds.size());
        row.gap = proxy_value[si] - v.mean;
        row.gap_mode = "k_eq_n_proxy";
      }
    } catch (const std::exception& e) {
      row.error = e.what();
      row.gap_mode = "error";
    }
  });

  std::string csv = std::string(kGapSweepCsvHeader) + "\n";
  Json errors = Json::array();
  for (const auto& r : rows) {
    csv += env.name() + ',' + std::to_string(n) + ',' + std::to_string(r.k) + ',' + std::to_string(cfg.m) + ',' +
           std::to_string(cfg.T) + ',' + std::to_string(cfg.T_prime) + ',' + std::to_string(r.seed) + ',' +
           detail::csv_double(r.return_mean) + ',' + detail::csv_double(r.return_se) + ',' +
           detail::csv_double(r.gap) + ',' + r.gap_mode + ',' + detail::csv_double(r.wall_ms) + '\n';
    if (!r.error.empty()) errors.push_back({{"k", r.k}, {"seed", r.seed}, {"error", r.error}});
  }
  detail::write_text(dir / "gap_sweep.csv", csv);

  std::string summary = std::string(kGapSummaryCsvHeader) + "\n";
  for (auto k : cfg.k) {
    std::vector<double> gaps, rets;
    for (const auto& r : rows) {
      if (r.k != k || !r.error.empty()) continue;
      if (!std::isnan(r.gap)) gaps.push_back(r.gap);
      rets.push_back(r.return_mean);
    }
    const double nan = std::numeric_limits<double>::quiet_NaN();
    summary += env.name() + ',' + std::to_string(n) + ',' + std::to_string(k) + ',' + std::to_string(rets.size()) +
               ',' + detail::csv_double(gaps.empty() ? nan : sample_mean(gaps)) + ',' +
               detail::csv_double(gaps.empty() ? nan : standard_error(gaps)) + ',' +
               detail::csv_double(rets.empty() ? nan : sample_mean(rets)) + ',' +
               detail::csv_double(rets.empty() ? nan : standard_error(rets)) + '\n';
  }
  detail::write_text(dir / "gap_summary.csv", summary);
  meta.notes["errors"] = errors;
  meta.write(dir);
  return rows;
}

struct BenchRow {
  std::uint32_t k = 0;
  int rep = 0;
  std::uint64_t dists = 0;
  std::uint64_t entries = 0;
  double wall_ms = std::numeric_limits<double>::quiet_NaN();
  std::string status = "ok";
};

// bench: learn wall time for every k, `repetitions` times. Runs serially so
// timings do not interfere; a k whose table exceeds the budget is recorded
// with status "capacity".
inline std::vector<BenchRow> cmd_bench(const ExperimentConfig& cfg) {
  cfg.validate();
  const auto dir = prepare_out(cfg);
  const EnvModel env = cfg.build_env();
  RunMetadata meta{"bench", cfg.to_json()};
  std::vector<BenchRow> rows;
  const std::uint64_t seed = cfg.seeds.front();
  for (auto k : cfg.k) {
    for (int rep = 0; rep < cfg.repetitions; ++rep) {
      BenchRow row;
      row.k = k;
      row.rep = rep;
      row.dists = lattice_size(k, env.num_local_states());
      try {
        const auto res = learn(env, learn_options(cfg, k, seed + static_cast<std::uint64_t>(rep)));
        row.entries = res.report.table_entries;
        row.wall_ms = res.report.wall_ms;
      } catch (const CapacityError& e) {
        row.status = "capacity";
        meta.notes["k=" + std::to_string(k)] = e.what();
      }
      rows.push_back(row);
    }
  }
  std::string csv = std::string(kBenchCsvHeader) + "\n";
  for (const auto& r : rows) {
    csv += env.name() + ',' + std::to_string(env.num_locals()) + ',' + std::to_string(r.k) + ',' +
           std::to_string(cfg.m) + ',' + std::to_string(cfg.T) + ',' + std::to_string(r.rep) + ',' +
           std::to_string(r.dists) + ',' + std::to_string(r.entries) + ',' + detail::csv_double(r.wall_ms) + ',' +
           r.status + '\n';
  }
  detail::write_text(dir / "bench.csv", csv);
  meta.write(dir);
  return rows;
}

struct DkwParams {
  std::string population = "uniform";  // uniform | skewed | three_state
  std::uint32_t n = 50;
  std::uint32_t k = 10;
  double eps = 0.3;
  std::uint64_t trials = 100'000;
  std::uint64_t seed = 0;
  unsigned jobs = 1;
  std::string out = "out";
};

// Named test populations: two states half/half, two states 90/10, or three
// states in thirds (remainders go to the lowest states).
inline std::pair<std::vector<LocalState>, std::uint32_t> make_population(const std::string& kind, std::uint32_t n) {
  std::vector<double> shares;
  if (kind == "uniform") {
    shares = {0.5, 0.5};
  } else if (kind == "skewed") {
    shares = {0.9, 0.1};
  } else if (kind == "three_state") {
    shares = {1.0 / 3, 1.0 / 3, 1.0 / 3};
  } else {
    throw InvalidParameterError("unknown population '" + kind + "'");
  }
  const auto L = static_cast<std::uint32_t>(shares.size());
  std::vector<std::uint32_t> counts(L);
  std::uint32_t used = 0;
  for (std::uint32_t x = 0; x < L; ++x) {
    counts[x] = static_cast<std::uint32_t>(std::floor(shares[x] * n + 1e-9));
    used += counts[x];
  }
  for (std::uint32_t x = 0; used < n; x = (x + 1) % L, ++used) ++counts[x];
  std::vector<LocalState> pop;
  for (std::uint32_t x = 0; x < L; ++x) pop.insert(pop.end(), counts[x], x);
  return {pop, L};
}

inline BoundReport cmd_dkw_check(const DkwParams& p) {
  std::filesystem::path dir(p.out);
  std::filesystem::create_directories(dir);
  const auto [pop, L] = make_population(p.population, p.n);
  SeededRng rng(p.seed);
  auto rep = mc_dkw_check(pop, L, p.k, p.eps, p.trials, rng, p.jobs);
  Json j = rep.to_json();
  j["population"] = p.population;
  j["seed"] = p.seed;
  detail::write_text(dir / "dkw_check.json", j.dump(2) + "\n");
  RunMetadata meta{"dkw-check",
                   Json{{"population", p.population}, {"n", p.n}, {"k", p.k}, {"eps", p.eps}, {"trials", p.trials},
                        {"seed", p.seed}, {"jobs", p.jobs}, {"out", p.out}}};
  meta.write(dir);
  return rep;
}

}  // namespace subq

#endif  // SUBQ_EXPERIMENT_HPP_
