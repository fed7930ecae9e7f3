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


// subq: command-line front end.
//
//   subq learn      --config run.json [--k 2 --seeds 1 2 ...]
//   subq execute    --config run.json
//   subq gap-sweep  --config run.json --jobs 4
//   subq bench      --config run.json
//   subq dkw-check  --population skewed --n 50 --k 10 --eps 0.2
//   subq verify     --level fast
//
// Flags carry the same names as the keys of the experiment file and override
// them.

#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "subq/subq.hpp"

namespace {

struct Overrides {
  std::string config;
  std::string env;
  std::uint32_t n = 0;
  std::vector<std::uint32_t> k;
  std::uint32_t m = 0;
  int T = 0;
  int T_prime = 0;
  std::uint64_t episodes = 0;
  std::vector<std::uint64_t> seeds;
  bool exact_oracle = false;
  bool exact_learning = false;
  int repetitions = 0;
  unsigned jobs = 0;
  std::string out;
  std::string table;
  std::vector<CLI::Option*> opts;
};

void add_experiment_flags(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--config", o.config, "experiment JSON file")->check(CLI::ExistingFile);
  o.opts = {
      cmd->add_option("--env", o.env, "environment JSON (inline text or a file path)"),
      cmd->add_option("--n", o.n, "number of local agents"),
      cmd->add_option("--k", o.k, "sample sizes"),
      cmd->add_option("--m", o.m, "samples per Bellman backup"),
      cmd->add_option("--T", o.T, "learning sweeps"),
      cmd->add_option("--T_prime", o.T_prime, "execution horizon"),
      cmd->add_option("--episodes", o.episodes, "Monte Carlo episodes"),
      cmd->add_option("--seeds", o.seeds, "seeds"),
      cmd->add_option("--exact_oracle", o.exact_oracle, "use the joint-MDP oracle for gaps"),
      cmd->add_option("--exact_learning", o.exact_learning, "learn with the exact adapted operator"),
      cmd->add_option("--repetitions", o.repetitions, "bench repetitions"),
      cmd->add_option("--jobs", o.jobs, "worker threads"),
      cmd->add_option("--out", o.out, "output directory"),
      cmd->add_option("--table", o.table, "execute: load this table artifact"),
  };
}

subq::ExperimentConfig resolve(const Overrides& o) {
  subq::ExperimentConfig cfg;
  if (!o.config.empty()) cfg = subq::experiment_from_json(subq::read_json_file(o.config));
  auto given = [&o](const char* name) {
    for (auto* opt : o.opts) {
      if (opt->get_name() == name) return opt->count() > 0;
    }
    return false;
  };
  if (given("--env")) {
    cfg.env = o.env.find('{') != std::string::npos ? subq::Json::parse(o.env) : subq::read_json_file(o.env);
  }
  if (given("--n")) cfg.n = o.n;
  if (given("--k")) cfg.k = o.k;
  if (given("--m")) cfg.m = o.m;
  if (given("--T")) cfg.T = o.T;
  if (given("--T_prime")) cfg.T_prime = o.T_prime;
  if (given("--episodes")) cfg.episodes = o.episodes;
  if (given("--seeds")) cfg.seeds = o.seeds;
  if (given("--exact_oracle")) cfg.exact_oracle = o.exact_oracle;
  if (given("--exact_learning")) cfg.exact_learning = o.exact_learning;
  if (given("--repetitions")) cfg.repetitions = o.repetitions;
  if (given("--jobs")) cfg.jobs = o.jobs;
  if (given("--out")) cfg.out = o.out;
  if (given("--table")) cfg.table = o.table;
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Subsampled mean-field Q-learning toolkit"};
  app.require_subcommand(1);

  Overrides learn_o, exec_o, sweep_o, bench_o;
  auto* learn_cmd = app.add_subcommand("learn", "learn tables for every (k, seed)");
  add_experiment_flags(learn_cmd, learn_o);
  auto* exec_cmd = app.add_subcommand("execute", "run the sampled policy and write trajectories");
  add_experiment_flags(exec_cmd, exec_o);
  auto* sweep_cmd = app.add_subcommand("gap-sweep", "optimality gap and return for every (k, seed)");
  add_experiment_flags(sweep_cmd, sweep_o);
  auto* bench_cmd = app.add_subcommand("bench", "learn wall time across k");
  add_experiment_flags(bench_cmd, bench_o);

  subq::DkwParams dkw;
  auto* dkw_cmd = app.add_subcommand("dkw-check", "Monte Carlo check of the without-replacement bound");
  dkw_cmd->add_option("--population", dkw.population, "uniform | skewed | three_state")
      ->check(CLI::IsMember({"uniform", "skewed", "three_state"}));
  dkw_cmd->add_option("--n", dkw.n, "population size");
  dkw_cmd->add_option("--k", dkw.k, "sample size");
  dkw_cmd->add_option("--eps", dkw.eps, "deviation threshold");
  dkw_cmd->add_option("--trials", dkw.trials, "number of sampled subsets");
  dkw_cmd->add_option("--seed", dkw.seed, "seed");
  dkw_cmd->add_option("--jobs", dkw.jobs, "worker threads");
  dkw_cmd->add_option("--out", dkw.out, "output directory");

  std::string level = "fast";
  auto* verify_cmd = app.add_subcommand("verify", "run the invariant suite");
  verify_cmd->add_option("--level", level, "fast | full")->check(CLI::IsMember({"fast", "full"}));

  CLI11_PARSE(app, argc, argv);

  try {
    if (*learn_cmd) {
      subq::cmd_learn(resolve(learn_o));
    } else if (*exec_cmd) {
      subq::cmd_execute(resolve(exec_o));
    } else if (*sweep_cmd) {
      const auto rows = subq::cmd_gap_sweep(resolve(sweep_o));
      for (const auto& r : rows) {
        if (!r.error.empty()) std::cerr << "k=" << r.k << " seed=" << r.seed << ": " << r.error << "\n";
      }
    } else if (*bench_cmd) {
      subq::cmd_bench(resolve(bench_o));
    } else if (*dkw_cmd) {
      const auto rep = subq::cmd_dkw_check(dkw);
      std::cout << rep.to_json().dump(2) << "\n";
      return rep.violation ? 1 : 0;
    } else if (*verify_cmd) {
      const auto results = subq::run_verify(level == "full", &std::cout);
      std::size_t failed = 0;
      for (const auto& r : results) failed += r.passed ? 0 : 1;
      std::cout << results.size() - failed << "/" << results.size() << " checks passed\n";
      return failed == 0 ? 0 : 1;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
