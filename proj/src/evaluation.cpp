#include "vocbf/evaluation.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <iomanip>
#include <mutex>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "vocbf/io.hpp"

namespace vocbf::eval {

namespace {

constexpr std::uint64_t kInitStream = 1;
constexpr std::uint64_t kNoiseStream = 2;

double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

double population_std(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size()));
}

// Simulates episodes [begin, end) in lockstep.
void run_chunk(const policy::Controller& policy, const Eigen::MatrixXd& x0, const agv::AgvConfig& cfg,
               const BatchOptions& opt, std::size_t begin, std::size_t end, std::vector<RolloutResult>& out) {
  std::vector<std::size_t> active;
  std::vector<agv::AgvState> state;
  std::vector<Rng> rngs;
  // one distribution per episode: libstdc++ caches the second Box-Muller draw
  std::vector<std::normal_distribution<double>> normals(end - begin);
  for (std::size_t i = begin; i < end; ++i) {
    active.push_back(i);
    state.push_back(agv::AgvState::from(x0.col(static_cast<Eigen::Index>(i))));
    rngs.emplace_back(derive_seed(opt.noise_seed, i));
    out[i] = RolloutResult{};
  }
  // slot k of `state`/`rngs` belongs to episode begin + k
  auto slot = [begin](std::size_t episode) { return episode - begin; };

  for (int t = 0; t <= cfg.horizon && !active.empty(); ++t) {
    std::vector<std::size_t> alive;
    for (std::size_t e : active) {
      RolloutResult& r = out[e];
      if (agv::safety_value(state[slot(e)], cfg) < 0.0) {
        r.safe = false;
        r.first_violation_step = t;
        r.steps_taken = t;
      } else if (t == cfg.horizon) {
        r.steps_taken = t;
      } else {
        alive.push_back(e);
      }
    }
    active.swap(alive);
    if (active.empty() || t == cfg.horizon) break;

    Eigen::MatrixXd xs(agv::kStateDim, static_cast<Eigen::Index>(active.size()));
    for (std::size_t k = 0; k < active.size(); ++k) {
      xs.col(static_cast<Eigen::Index>(k)) = state[slot(active[k])].vec();
    }
    policy::ActDiagnostics diag;
    const Eigen::MatrixXd u = policy.act(xs, &diag);
    for (std::size_t k = 0; k < active.size(); ++k) {
      const std::size_t e = active[k];
      RolloutResult& r = out[e];
      agv::AgvState& s = state[slot(e)];
      r.total_reward += agv::reward(s, cfg);
      if (!diag.infeasible.empty() && diag.infeasible[k]) ++r.infeasible_steps;
      double uk = u(0, static_cast<Eigen::Index>(k));
      if (opt.noise_sigma > 0.0) uk += opt.noise_sigma * normals[slot(e)](rngs[slot(e)]);
      uk = std::clamp(uk, -cfg.u_bound, cfg.u_bound);
      s = agv::step(s, uk, cfg);
    }
  }
}

}  // namespace

RolloutResult rollout(const policy::Controller& policy, const agv::AgvState& x0, const agv::AgvConfig& cfg,
                      double noise_sigma, Rng& rng) {
  RolloutResult r;
  agv::AgvState s = x0;
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int t = 0;; ++t) {
    if (agv::safety_value(s, cfg) < 0.0) {
      r.safe = false;
      r.first_violation_step = t;
      r.steps_taken = t;
      return r;
    }
    if (t == cfg.horizon) {
      r.steps_taken = t;
      return r;
    }
    r.total_reward += agv::reward(s, cfg);
    policy::ActDiagnostics diag;
    double u = policy.act(s.vec(), &diag)(0, 0);
    if (!diag.infeasible.empty() && diag.infeasible[0]) ++r.infeasible_steps;
    if (noise_sigma > 0.0) u += noise_sigma * normal(rng);
    s = agv::step(s, std::clamp(u, -cfg.u_bound, cfg.u_bound), cfg);
  }
}

std::vector<RolloutResult> run_episodes(const policy::Controller& policy, const Eigen::MatrixXd& initial_states,
                                        const agv::AgvConfig& cfg, const BatchOptions& opt) {
  if (initial_states.rows() != agv::kStateDim) throw std::invalid_argument("run_episodes: AGV states expected");
  if (opt.chunk_size < 1 || opt.threads < 1) throw std::invalid_argument("run_episodes: chunk_size and threads >= 1");
  if (!(opt.noise_sigma >= 0.0)) throw std::invalid_argument("run_episodes: noise sigma must be >= 0");
  const auto n = static_cast<std::size_t>(initial_states.cols());
  const auto chunk = static_cast<std::size_t>(opt.chunk_size);
  const std::size_t n_chunks = (n + chunk - 1) / chunk;
  std::vector<RolloutResult> out(n);

  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (std::size_t c = next++; c < n_chunks; c = next++) {
      try {
        run_chunk(policy, initial_states, cfg, opt, c * chunk, std::min(n, (c + 1) * chunk), out);
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  const auto n_threads = std::min<std::size_t>(static_cast<std::size_t>(opt.threads), std::max<std::size_t>(n_chunks, 1));
  if (n_threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t i = 0; i < n_threads; ++i) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (failure) std::rethrow_exception(failure);
  return out;
}

Eigen::MatrixXd sample_initial_states(std::size_t n, const agv::AgvConfig& cfg, std::uint64_t seed,
                                      bool exclude_unsafe) {
  Rng rng(derive_seed(seed, kInitStream));
  Eigen::MatrixXd xs(agv::kStateDim, static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n;) {
    const agv::AgvState s = agv::sample_state(rng, cfg);
    if (exclude_unsafe && agv::safety_value(s, cfg) < 0.0) continue;
    xs.col(static_cast<Eigen::Index>(i++)) = s.vec();
  }
  return xs;
}

double TableRow::infeasible_pct() const {
  std::uint64_t steps = 0;
  std::uint64_t infeasible = 0;
  for (const auto& s : per_seed) {
    steps += s.steps;
    infeasible += s.infeasible_steps;
  }
  return steps == 0 ? 0.0 : 100.0 * static_cast<double>(infeasible) / static_cast<double>(steps);
}

const TableRow& ExperimentTable::row(const std::string& label) const {
  for (const auto& r : rows) {
    if (r.label == label) return r;
  }
  throw std::out_of_range("no row labelled '" + label + "' in table " + name);
}

TableRow eval_suite(const std::string& label, const policy::Controller& policy, const agv::AgvConfig& cfg,
                    const SuiteConfig& suite) {
  if (suite.seeds.empty() || suite.episodes == 0) throw std::invalid_argument("eval_suite: need seeds and episodes");
  TableRow row;
  row.label = label;
  std::vector<double> safe_pcts;
  std::vector<double> rewards;
  for (std::uint64_t seed : suite.seeds) {
    const Eigen::MatrixXd x0 = sample_initial_states(suite.episodes, cfg, seed, true);
    BatchOptions opt;
    opt.noise_sigma = suite.noise_sigma;
    opt.noise_seed = derive_seed(seed, kNoiseStream);
    opt.threads = suite.threads;
    opt.chunk_size = suite.chunk_size;
    const auto results = run_episodes(policy, x0, cfg, opt);

    SeedResult sr;
    sr.seed = seed;
    sr.episodes = results.size();
    double reward_sum = 0.0;
    for (const auto& r : results) {
      if (r.safe) ++sr.safe_episodes;
      reward_sum += r.total_reward;
      sr.steps += static_cast<std::uint64_t>(r.steps_taken);
      sr.infeasible_steps += static_cast<std::uint64_t>(r.infeasible_steps);
    }
    sr.safe_pct = 100.0 * static_cast<double>(sr.safe_episodes) / static_cast<double>(sr.episodes);
    sr.mean_reward = reward_sum / static_cast<double>(sr.episodes);
    safe_pcts.push_back(sr.safe_pct);
    rewards.push_back(sr.mean_reward);
    row.per_seed.push_back(sr);
  }
  row.safe_pct = mean(safe_pcts);
  row.safe_std = population_std(safe_pcts);
  row.reward = mean(rewards);
  row.reward_std = population_std(rewards);
  return row;
}

double safe_set_volume(const policy::Controller& policy, std::size_t n_samples, const agv::AgvConfig& cfg,
                       std::uint64_t seed, int threads, int chunk_size) {
  if (n_samples == 0) throw std::invalid_argument("safe_set_volume: n_samples must be >= 1");
  const Eigen::MatrixXd x0 = sample_initial_states(n_samples, cfg, seed, false);
  BatchOptions opt;
  opt.threads = threads;
  opt.chunk_size = chunk_size;
  const auto results = run_episodes(policy, x0, cfg, opt);
  std::size_t safe = 0;
  for (const auto& r : results) safe += r.safe ? 1 : 0;
  return 100.0 * static_cast<double>(safe) / static_cast<double>(n_samples);
}

void write_table_csv(std::ostream& out, const ExperimentTable& table) {
  if (!table.param_name.empty()) out << table.param_name << ',';
  out << "label,safe_pct,safe_std,reward,reward_std\n";
  for (const auto& r : table.rows) {
    if (!table.param_name.empty()) out << (r.param ? format_double(*r.param) : std::string()) << ',';
    out << r.label << ',' << format_double(r.safe_pct) << ',' << format_double(r.safe_std) << ','
        << format_double(r.reward) << ',' << format_double(r.reward_std) << '\n';
  }
}

void write_plot_data(std::ostream& out, const ExperimentTable& table) {
  out << "table,label,param,seed,metric,value\n";
  for (const auto& r : table.rows) {
    const std::string param = r.param ? format_double(*r.param) : std::string();
    for (const auto& s : r.per_seed) {
      const std::string prefix = table.name + ',' + r.label + ',' + param + ',' + std::to_string(s.seed) + ',';
      out << prefix << "safe_pct," << format_double(s.safe_pct) << '\n';
      out << prefix << "mean_reward," << format_double(s.mean_reward) << '\n';
      out << prefix << "infeasible_steps," << s.infeasible_steps << '\n';
      out << prefix << "steps," << s.steps << '\n';
    }
  }
}

std::string summarize(const ExperimentTable& table) {
  std::ostringstream ss;
  ss << std::fixed;
  for (const auto& r : table.rows) {
    ss << table.name << ' ';
    if (r.param) ss << table.param_name << '=' << std::setprecision(2) << *r.param << ' ';
    ss << r.label << ": safe " << std::setprecision(2) << r.safe_pct << " +- " << r.safe_std << " %, reward "
       << r.reward << " +- " << r.reward_std << ", infeasible " << std::setprecision(3) << r.infeasible_pct()
       << " % of steps\n";
  }
  return ss.str();
}

}  // namespace vocbf::eval
