#include <doctest.h>

#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "vocbf/agv.hpp"
#include "vocbf/dynamics.hpp"
#include "vocbf/io.hpp"

using namespace vocbf;
using namespace vocbf::dyn;

TEST_CASE("zero heads give the identity map") {
  DynamicsSurrogate d = make_surrogate(3, 1, 0.01, FeatureMap::AgvHeading, {16, 16}, 4, true);
  Eigen::Vector3d x(0.3, -0.2, 1.0);
  Eigen::VectorXd u(1);
  u << 0.7;
  CHECK((predict_next(d, x, u) - x).norm() == 0.0);
}

TEST_CASE("surrogate is affine in u and consistent with f, g") {
  DynamicsSurrogate d = make_surrogate(3, 2, 0.05, FeatureMap::AgvHeading, {8}, 9);
  Eigen::Vector3d x(0.1, 0.4, -2.0);
  Eigen::VectorXd f;
  Eigen::MatrixXd g;
  eval_fg(d, x, f, g);
  REQUIRE(f.size() == 3);
  REQUIRE(g.rows() == 3);
  REQUIRE(g.cols() == 2);
  Eigen::Vector2d u1(0.3, -0.5), u2(-1.0, 0.25);
  const Eigen::VectorXd p1 = predict_next(d, x, u1), p2 = predict_next(d, x, u2);
  const Eigen::VectorXd pm = predict_next(d, x, 0.5 * (u1 + u2));
  CHECK((0.5 * (p1 + p2) - pm).norm() <= 1e-14);
  CHECK((p1 - (x + 0.05 * (f + g * u1))).norm() <= 1e-14);

  // batched evaluation matches the single-state one column by column
  Eigen::MatrixXd xs(3, 2);
  xs.col(0) = x;
  xs.col(1) = Eigen::Vector3d(-0.5, 0.0, 0.5);
  Eigen::MatrixXd us(2, 2);
  us.col(0) = u1;
  us.col(1) = u2;
  const Eigen::MatrixXd batch = predict_next_batch(d, xs, us);
  CHECK((batch.col(0) - p1).norm() == 0.0);
  CHECK((batch.col(1) - predict_next(d, xs.col(1), u2)).norm() == 0.0);
  CHECK_THROWS_AS(predict_next_batch(d, xs, us.topRows(1)), std::invalid_argument);
}

TEST_CASE("one-step RMSE wraps the heading residual") {
  DynamicsSurrogate d = make_surrogate(3, 1, 0.01, FeatureMap::AgvHeading, {4}, 1, true);
  data::TransitionSet set;
  set.state_dim = 3;
  set.control_dim = 1;
  data::Transition t;
  t.x = {0.0, 0.0, std::numbers::pi - 0.001};
  t.u = {0.0};
  t.x_next = {0.0, 0.0, -std::numbers::pi + 0.009};
  set.transitions.push_back(t);
  const Eigen::VectorXd rmse = one_step_rmse(d, set, {2});
  CHECK(rmse(0) == 0.0);
  CHECK(rmse(2) == doctest::Approx(0.01));
  CHECK(one_step_rmse(d, set, {})(2) > 6.0);
}

TEST_CASE("checkpoint round trip is exact") {
  DynamicsSurrogate d = make_surrogate(3, 1, 0.01, FeatureMap::AgvHeading, {8, 8}, 12);
  std::stringstream buf;
  write_surrogate(buf, d);
  const std::string first_line = buf.str().substr(0, buf.str().find('\n'));
  CHECK(first_line == "VOCBF-DYN v2 dt=0.01 state_dim=3 control_dim=1 features=agv_heading lo=none hi=none");
  DynamicsSurrogate r = read_surrogate(buf);
  CHECK(r.state_lo.empty());
  CHECK(r.dt == d.dt);
  CHECK(r.features == d.features);
  CHECK(r.f_net.spec == d.f_net.spec);
  CHECK(r.g_net.spec == d.g_net.spec);
  for (std::size_t i = 0; i < d.f_net.params.size(); ++i) REQUIRE(r.f_net.params.flat(i) == d.f_net.params.flat(i));
  for (std::size_t i = 0; i < d.g_net.params.size(); ++i) REQUIRE(r.g_net.params.flat(i) == d.g_net.params.flat(i));

  std::istringstream bad("VOCBF-DYN v1 dt=0.01 state_dim=3 control_dim=1 features=agv_heading\n");
  CHECK_THROWS_AS(read_surrogate(bad), ParseError);
  std::istringstream junk("hello\n");
  CHECK_THROWS_AS(read_surrogate(junk), ParseError);
  CHECK_THROWS_AS(load_surrogate("/nonexistent/dyn.ckpt"), IoError);
}

TEST_CASE("state box clamps predictions and survives a round trip") {
  DynamicsSurrogate d = make_surrogate(3, 1, 0.01, FeatureMap::AgvHeading, {8}, 3, true);
  d.f_net.params.biases.back() << 10.0, -10.0, 10.0;
  const double inf = std::numeric_limits<double>::infinity();
  d.state_lo = {-1.0, -1.0, -inf};
  d.state_hi = {1.0, 1.0, inf};
  const Eigen::Vector3d x(0.95, -0.98, 0.3);
  const Eigen::Vector3d next = predict_next(d, x, Eigen::VectorXd::Zero(1));
  CHECK(next(0) == 1.0);
  CHECK(next(1) == -1.0);
  CHECK(next(2) == doctest::Approx(0.4));

  std::stringstream buf;
  write_surrogate(buf, d);
  CHECK(buf.str().substr(0, buf.str().find('\n')) ==
        "VOCBF-DYN v2 dt=0.01 state_dim=3 control_dim=1 features=agv_heading lo=-1,-1,-inf hi=1,1,inf");
  DynamicsSurrogate r = read_surrogate(buf);
  CHECK(r.state_lo == d.state_lo);
  CHECK(r.state_hi == d.state_hi);

  std::istringstream inverted(
      "VOCBF-DYN v2 dt=0.01 state_dim=3 control_dim=1 features=agv_heading lo=1,1,1 hi=0,0,0\n");
  CHECK_THROWS_AS(read_surrogate(inverted), ParseError);
}

TEST_CASE("training validates the state box") {
  agv::AgvConfig env;
  data::TransitionSet set = agv::generate_dataset(2000, env, 4);
  DynamicsTrainConfig cfg;
  cfg.hidden = {8};
  cfg.epochs = 1;
  const double inf = std::numeric_limits<double>::infinity();
  cfg.state_lo = {-1.0, -1.0, 6.0};
  cfg.state_hi = {1.0, 1.0, 5.0};
  CHECK_THROWS_AS(train_dynamics(set, cfg), std::invalid_argument);
  cfg.state_lo = {-1.0, -1.0};
  cfg.state_hi = {1.0, 1.0};
  CHECK_THROWS_AS(train_dynamics(set, cfg), std::invalid_argument);
  cfg.state_lo = {-1.0, -1.0, -inf};
  cfg.state_hi = {1.0, 1.0, inf};
  CHECK(train_dynamics(set, cfg).model.state_hi == cfg.state_hi);
}

TEST_CASE("short training run fits the AGV data") {
  agv::AgvConfig env;
  data::TransitionSet set = agv::generate_dataset(10000, env, 21);
  DynamicsTrainConfig cfg;
  cfg.hidden = {32, 32};
  cfg.lr = 1e-3;
  cfg.epochs = 15;
  cfg.seed = 5;
  DynamicsTrainResult res = train_dynamics(set, cfg);
  CHECK(res.train_transitions + res.test_transitions == 10000);
  CHECK(res.test_transitions == 1000);  // 20 whole episodes of 500
  REQUIRE(res.epoch_loss.size() == 15);
  CHECK(res.epoch_loss.back() < 0.1 * res.epoch_loss.front());
  // A do-nothing model has per-dim RMSE around v dt / sqrt(2) = 4e-3 in position.
  CHECK(res.heldout_rmse(0) < 4e-3);
  CHECK(res.heldout_rmse(2) < 4e-3);

  // Same seed, same bits.
  DynamicsTrainResult again = train_dynamics(set, cfg);
  for (std::size_t i = 0; i < res.model.g_net.params.size(); ++i)
    REQUIRE(again.model.g_net.params.flat(i) == res.model.g_net.params.flat(i));

  cfg.test_fraction = 1.0;
  CHECK_THROWS_AS(train_dynamics(set, cfg), std::invalid_argument);
}
