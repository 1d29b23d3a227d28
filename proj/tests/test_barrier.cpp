#include <doctest.h>

#include <cmath>

#include "vocbf/agv.hpp"
#include "vocbf/barrier.hpp"
#include "vocbf/checks.hpp"

using namespace vocbf;
using namespace vocbf::barrier;

namespace {

// One-hot tabular dataset: transition (from -> to) with l(from) = ell[from].
data::TransitionSet tabular(const std::vector<std::pair<int, int>>& edges, const std::vector<double>& ell) {
  data::TransitionSet set;
  set.state_dim = static_cast<int>(ell.size());
  set.control_dim = 1;
  for (std::size_t k = 0; k < edges.size(); ++k) {
    data::Transition t;
    t.x.assign(ell.size(), 0.0);
    t.x_next.assign(ell.size(), 0.0);
    t.x[static_cast<std::size_t>(edges[k].first)] = 1.0;
    t.x_next[static_cast<std::size_t>(edges[k].second)] = 1.0;
    t.u = {static_cast<double>(k)};
    t.episode_id = 0;
    t.step_id = static_cast<std::int64_t>(k);
    t.ell_x = ell[static_cast<std::size_t>(edges[k].first)];
    t.ell_x_next = ell[static_cast<std::size_t>(edges[k].second)];
    set.transitions.push_back(t);
  }
  return set;
}

BarrierTrainConfig toy_config(int n_inputs, std::vector<int> hidden) {
  BarrierTrainConfig c;
  c.features = FeatureMap::Identity;
  std::vector<int> widths{n_inputs};
  widths.insert(widths.end(), hidden.begin(), hidden.end());
  widths.push_back(1);
  c.barrier_spec = {widths, nn::Activation::ReLU, 3};
  c.batch_size = 32;
  c.lr = 1e-3;
  c.seed = 1;
  return c;
}

double value_at(const nn::MlpModel& m, int n, int state) {
  Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
  x(state) = 1.0;
  return nn::forward(m, x)(0);
}

}  // namespace

TEST_CASE("bd_target examples") {
  CHECK(bd_target(0.5, 0.3, 0.99) == doctest::Approx(0.302));
  CHECK(bd_target(0.5, 0.3, 1e-12) == doctest::Approx(0.5));
  for (double g : {0.1, 0.5, 0.99}) CHECK(bd_target(-0.1, 0.4, g) == doctest::Approx(-0.1));
  Eigen::RowVectorXd ell(2), nxt(2);
  ell << 0.5, -0.1;
  nxt << 0.3, 0.4;
  Eigen::RowVectorXd t = bd_targets(ell, nxt, 0.99);
  CHECK(t(0) == doctest::Approx(0.302));
  CHECK(t(1) == doctest::Approx(-0.1));
}

TEST_CASE("config validation") {
  BarrierTrainConfig c;
  c.gamma = 1.0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = BarrierTrainConfig{};
  c.tau = 0.0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = BarrierTrainConfig{};
  c.lr = 0.0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
}

TEST_CASE("TD barrier on constant l converges to the constant") {
  // Chain of one-hot states, l = 0.4 everywhere: the fixpoint is B = 0.4.
  std::vector<std::pair<int, int>> edges;
  for (int i = 0; i < 4; ++i) edges.emplace_back(i, (i + 1) % 4);
  auto set = tabular(edges, std::vector<double>(4, 0.4));
  BarrierTrainConfig cfg = toy_config(4, {16});
  cfg.gamma = 0.9;
  cfg.target_polyak_rho = 0.05;
  cfg.epochs = 3000;
  std::vector<EpochLoss> log;
  nn::MlpModel psi = train_td_barrier(set, cfg, &log);
  for (int s = 0; s < 4; ++s) CHECK(value_at(psi, 4, s) == doctest::Approx(0.4).epsilon(0.025));
  REQUIRE(log.size() == 3000);
  CHECK(log.back().loss_psi <= log.front().loss_psi);
}

TEST_CASE("TD barrier matches tabular value iteration on a safe-safe-unsafe chain") {
  const std::vector<double> ell{1.0, 1.0, -1.0};
  auto set = tabular({{0, 1}, {1, 2}, {2, 2}}, ell);
  BarrierTrainConfig cfg = toy_config(3, {16});
  cfg.target_polyak_rho = 0.05;
  cfg.epochs = 6000;
  nn::MlpModel psi = train_td_barrier(set, cfg);

  checks::TabularSystem sys{ell, {1, 2, 2}};
  const std::vector<double> fix = checks::value_iteration(sys, cfg.gamma, {0.0, 0.0, 0.0});
  CHECK(fix[2] == doctest::Approx(-1.0));
  CHECK(fix[1] == doctest::Approx(0.01 - 0.99));
  for (int s = 0; s < 3; ++s) CHECK(std::abs(value_at(psi, 3, s) - fix[static_cast<std::size_t>(s)]) <= 0.05);
}

TEST_CASE("expectile step over two logged outcomes") {
  // From x0 two logged actions lead to xa and xb. With l(x0) = 10 and
  // gamma = 0.9 the targets are 1 + 0.9 B(x'), chosen as {0.2, 0.8}.
  auto set = tabular({{0, 1}, {0, 2}}, {10.0, 10.0, 10.0});
  BarrierTrainConfig cfg = toy_config(3, {});
  cfg.gamma = 0.9;
  cfg.epochs = 3000;
  cfg.batch_size = 16;
  nn::MlpModel psi = nn::mlp_init(cfg.barrier_spec);
  psi.params.weights[0] << 0.0, (0.2 - 1.0) / 0.9, (0.8 - 1.0) / 0.9;
  psi.params.biases[0].setZero();

  cfg.tau = 0.5;
  nn::MlpModel mean_theta = train_theta_fixed_psi(set, psi, cfg);
  CHECK(std::abs(value_at(mean_theta, 3, 0) - 0.5) <= 0.05);

  cfg.tau = 0.99;
  TrainingStats stats;
  nn::MlpModel upper = train_theta_fixed_psi(set, psi, cfg, nullptr, &stats);
  CHECK(value_at(upper, 3, 0) >= 0.75);
  CHECK(value_at(upper, 3, 0) <= 0.8 + 0.02);
  CHECK(stats.sampled_actions == 0);
}

TEST_CASE("V-OCBF on AGV data: no action sampling, safe states score higher, tau ordering") {
  agv::AgvConfig env;
  data::TransitionSet set = agv::generate_dataset(20000, env, 3);
  BarrierTrainConfig cfg;
  cfg.barrier_spec = {{4, 64, 64, 1}, nn::Activation::ReLU, 5};
  cfg.epochs = 4;
  cfg.lr = 1e-3;
  cfg.seed = 2;
  BarrierModelPair pair = train_vocbf(set, cfg);
  CHECK(pair.stats.sampled_actions == 0);
  CHECK(pair.stats.minibatches == 4 * ((20000 + 255) / 256));
  CHECK(pair.training_log.size() == 4);
  CHECK(pair.psi.spec == pair.theta.spec);
  CHECK(pair.psi.params.all_finite());
  CHECK(pair.theta.params.all_finite());

  BarrierFunction theta{pair.theta, cfg.features};
  const Eigen::RowVectorXd values = theta.values(data::gather_all(set, data::Field::State));
  double safe_sum = 0.0, unsafe_sum = 0.0;
  int safe_n = 0, unsafe_n = 0;
  for (std::size_t i = 0; i < set.size(); ++i) {
    if (set.transitions[i].ell_x > 0.3) {
      safe_sum += values(static_cast<Eigen::Index>(i));
      ++safe_n;
    } else if (set.transitions[i].ell_x < 0.0) {
      unsafe_sum += values(static_cast<Eigen::Index>(i));
      ++unsafe_n;
    }
  }
  REQUIRE(safe_n > 0);
  REQUIRE(unsafe_n > 0);
  CHECK(safe_sum / safe_n >= unsafe_sum / unsafe_n);

  // Retraining theta with a higher tau raises the mean prediction.
  BarrierTrainConfig low = cfg, high = cfg;
  low.tau = 0.5;
  high.tau = 0.9;
  const Eigen::MatrixXd states = data::gather_all(set, data::Field::State);
  const double m_low = BarrierFunction{train_theta_fixed_psi(set, pair.psi, low), cfg.features}.values(states).mean();
  const double m_high = BarrierFunction{train_theta_fixed_psi(set, pair.psi, high), cfg.features}.values(states).mean();
  CHECK(m_high >= m_low - 0.02);
}

TEST_CASE("model-based CBVF with the logged action and true dynamics reduces to the TD barrier") {
  agv::AgvConfig env;
  data::TransitionSet set = agv::generate_dataset(3000, env, 4);
  BarrierTrainConfig cfg;
  cfg.barrier_spec = {{4, 32, 32, 1}, nn::Activation::ReLU, 6};
  cfg.epochs = 2;
  cfg.seed = 8;
  SuccessorFn truth = [env](const Eigen::MatrixXd& x, const Eigen::MatrixXd& u) {
    Eigen::MatrixXd out(x.rows(), x.cols());
    for (Eigen::Index j = 0; j < x.cols(); ++j) out.col(j) = agv::step(agv::AgvState::from(x.col(j)), u(0, j), env).vec();
    return out;
  };
  ModelBasedConfig logged{1, ActionSource::Logged, -1.0, 1.0};
  TrainingStats mb_stats;
  nn::MlpModel mb = train_cbvf_model_based(set, truth, cfg, logged, nullptr, &mb_stats);
  nn::MlpModel td = train_td_barrier(set, cfg);
  for (std::size_t i = 0; i < td.params.size(); ++i) REQUIRE(mb.params.flat(i) == td.params.flat(i));
  CHECK(mb_stats.sampled_actions == 0);

  ModelBasedConfig uniform_box;
  TrainingStats stats;
  (void)train_cbvf_model_based(set, truth, cfg, uniform_box, nullptr, &stats);
  CHECK(stats.sampled_actions == stats.minibatches * 256 * 16);
  CHECK(uniform_box.n_action_samples == 16);

  // max over candidates picks the larger successor value column by column
  const Eigen::MatrixXd x = data::gather_all(set, data::Field::State).leftCols(5);
  std::vector<Eigen::MatrixXd> cands{Eigen::MatrixXd::Constant(1, 5, -1.0), Eigen::MatrixXd::Constant(1, 5, 1.0)};
  const Eigen::RowVectorXd best = max_successor_value(td, cfg.features, x, cands, truth);
  const Eigen::RowVectorXd a = BarrierFunction{td, cfg.features}.values(truth(x, cands[0]));
  const Eigen::RowVectorXd b = BarrierFunction{td, cfg.features}.values(truth(x, cands[1]));
  for (Eigen::Index j = 0; j < 5; ++j) CHECK(best(j) == doctest::Approx(std::max(a(j), b(j))).epsilon(1e-12));
}

TEST_CASE("non-finite training data aborts") {
  auto set = tabular({{0, 1}, {1, 0}}, {1.0, std::nan("")});
  BarrierTrainConfig cfg = toy_config(2, {4});
  cfg.epochs = 1;
  CHECK_THROWS(train_td_barrier(set, cfg));
}

TEST_CASE("training curve CSV") {
  std::ostringstream out;
  write_training_curve(out, {{0, 1.5, 0.25}, {1, 1.0, 0.125}});
  CHECK(out.str() == "epoch,loss_psi,loss_theta\n0,1.5,0.25\n1,1,0.125\n");
}
