#include <doctest.h>

#include <cmath>
#include <numbers>

#include "vocbf/agv.hpp"
#include "vocbf/policy.hpp"

using namespace vocbf;
using namespace vocbf::policy;

TEST_CASE("goto_goal examples") {
  GoToGoal p;
  CHECK(goto_goal(0.0, 0.0, 0.0, p) == 1.0);
  CHECK(goto_goal(0.7, 0.0, std::numbers::pi / 2, p) == doctest::Approx(0.0));
  CHECK(goto_goal(0.0, 0.0, std::numbers::pi / 4 + 0.1, p) == doctest::Approx(-0.2));
  // the heading error wraps: pi/4 + 3 is the same as pi/4 + 3 - 2 pi
  CHECK(goto_goal(0.0, 0.0, -3.0, p) == -1.0);
  CHECK(goto_goal(0.0, 0.0, -3.0, {0.1, {0.7, 0.7}}) == doctest::Approx(0.1 * (std::numbers::pi / 4 + 3.0 - 2 * std::numbers::pi)));
  CHECK_THROWS_AS(ReferencePolicy::goto_goal({0.0, {0.7, 0.7}}), std::invalid_argument);
}

TEST_CASE("reference policy batches and clamps") {
  ReferencePolicy ref = ReferencePolicy::goto_goal(GoToGoal{}, -0.5, 0.5);
  Eigen::MatrixXd xs(3, 2);
  xs << 0.0, 0.0, 0.0, 0.0, 0.0, std::numbers::pi / 4 + 0.1;
  const Eigen::MatrixXd u = ref.act(xs);
  REQUIRE(u.rows() == 1);
  CHECK(u(0, 0) == 0.5);
  CHECK(u(0, 1) == doctest::Approx(-0.2));
  CHECK(ref.control_dim() == 1);
  CHECK_FALSE(ref.is_behavior_cloned());
}

TEST_CASE("squash stays inside the box") {
  Eigen::MatrixXd z(1, 5);
  z << -1e6, -1.0, 0.0, 1.0, 1e6;
  const Eigen::MatrixXd s = squash(z, -2.0, 4.0);
  CHECK(s(0, 2) == 1.0);
  CHECK(s(0, 3) == doctest::Approx(1.0 + 3.0 * std::tanh(1.0)));
  for (Eigen::Index j = 0; j < 5; ++j) {
    CHECK(s(0, j) >= -2.0);
    CHECK(s(0, j) <= 4.0);
  }
}

TEST_CASE("behaviour cloning recovers a constant action") {
  agv::AgvConfig env;
  data::TransitionSet set = agv::generate_dataset(2000, env, 3);
  for (auto& t : set.transitions) t.u = {0.4};
  BcTrainConfig cfg;
  cfg.hidden = {16};
  cfg.lr = 1e-2;
  cfg.epochs = 30;
  cfg.seed = 1;
  std::vector<double> loss;
  ReferencePolicy bc = train_bc(set, cfg, &loss);
  CHECK(bc.is_behavior_cloned());
  REQUIRE(loss.size() == 30);
  CHECK(loss.back() < 1e-4);
  const Eigen::MatrixXd u = bc.act(data::gather_all(set, data::Field::State).leftCols(50));
  CHECK((u.array() - 0.4).abs().maxCoeff() < 0.03);

  cfg.u_lo = 1.0;
  CHECK_THROWS_AS(train_bc(set, cfg), std::invalid_argument);
}

TEST_CASE("behaviour cloning on random actions stays near the mean") {
  agv::AgvConfig env;
  data::TransitionSet set = agv::generate_dataset(5000, env, 8);
  BcTrainConfig cfg;
  cfg.hidden = {16};
  cfg.lr = 1e-3;
  cfg.epochs = 5;
  ReferencePolicy bc = train_bc(set, cfg);
  const Eigen::MatrixXd u = bc.act(data::gather_all(set, data::Field::State));
  CHECK(std::abs(u.mean()) < 0.15);
  CHECK(u.maxCoeff() < 1.0);
  CHECK(u.minCoeff() > -1.0);
}
