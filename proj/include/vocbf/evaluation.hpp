#pragma once

// Closed-loop AGV rollouts and the experiment tables built from them.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "vocbf/agv.hpp"
#include "vocbf/policy.hpp"
#include "vocbf/rng.hpp"

namespace vocbf::eval {

struct RolloutResult {
  bool safe = true;
  double total_reward = 0.0;
  std::optional<int> first_violation_step;
  int steps_taken = 0;
  int infeasible_steps = 0;

  friend bool operator==(const RolloutResult&, const RolloutResult&) = default;
};

/// One episode. Steps with u = clamp(policy(x) + N(0, sigma^2)); stops at
/// the first visited state with l(x) < 0 (the final state included).
/// Reward is summed over the states visited before that.
RolloutResult rollout(const policy::Controller& policy, const agv::AgvState& x0, const agv::AgvConfig& cfg,
                      double noise_sigma, Rng& rng);

struct BatchOptions {
  double noise_sigma = 0.0;
  std::uint64_t noise_seed = 0;  // episode i draws from derive_seed(noise_seed, i)
  int threads = 1;
  // Episodes are simulated in lockstep chunks of this size; results depend
  // on it but never on the thread count.
  int chunk_size = 64;
};

/// Runs one episode per column of `initial_states`.
std::vector<RolloutResult> run_episodes(const policy::Controller& policy, const Eigen::MatrixXd& initial_states,
                                        const agv::AgvConfig& cfg, const BatchOptions& opt);

/// Uniform initial states; with exclude_unsafe, states with l < 0 are rejected.
Eigen::MatrixXd sample_initial_states(std::size_t n, const agv::AgvConfig& cfg, std::uint64_t seed,
                                      bool exclude_unsafe);

struct SeedResult {
  std::uint64_t seed = 0;
  std::size_t episodes = 0;
  std::size_t safe_episodes = 0;
  double safe_pct = 0.0;
  double mean_reward = 0.0;
  std::uint64_t steps = 0;
  std::uint64_t infeasible_steps = 0;
};

struct TableRow {
  std::string label;
  std::optional<double> param;  // tau or sigma in ablation tables
  double safe_pct = 0.0;
  double safe_std = 0.0;
  double reward = 0.0;
  double reward_std = 0.0;
  std::vector<SeedResult> per_seed;

  double infeasible_pct() const;
};

struct ExperimentTable {
  std::string name;
  std::string param_name;  // empty when rows carry no parameter
  std::vector<TableRow> rows;
  std::vector<std::uint64_t> seeds;
  std::size_t episodes_per_seed = 0;

  const TableRow& row(const std::string& label) const;
};

struct SuiteConfig {
  std::vector<std::uint64_t> seeds{11, 13, 17, 19, 23};
  std::size_t episodes = 500;
  double noise_sigma = 0.0;
  int threads = 1;
  int chunk_size = 64;
};

/// Safe-episode % and reward over every seed, with across-seed population
/// std. Initial states exclude the obstacle interior; they depend only on
/// the seed, so rows built with the same suite are paired.
TableRow eval_suite(const std::string& label, const policy::Controller& policy, const agv::AgvConfig& cfg,
                    const SuiteConfig& suite);

/// Percentage of uniform initial states (obstacle interior included) whose
/// closed-loop rollout stays safe for the horizon.
double safe_set_volume(const policy::Controller& policy, std::size_t n_samples, const agv::AgvConfig& cfg,
                       std::uint64_t seed, int threads = 1, int chunk_size = 64);

/// Header `[<param>,]label,safe_pct,safe_std,reward,reward_std`.
void write_table_csv(std::ostream& out, const ExperimentTable& table);

/// Long format `table,label,param,seed,metric,value` for plotting.
void write_plot_data(std::ostream& out, const ExperimentTable& table);

/// One line per row, "label: 95.72 +- 0.63 safe, reward ...".
std::string summarize(const ExperimentTable& table);

}  // namespace vocbf::eval
