#include <doctest.h>

#include <cmath>
#include <numbers>
#include <set>
#include <sstream>

#include "vocbf/agv.hpp"
#include "vocbf/dataset.hpp"
#include "vocbf/features.hpp"
#include "vocbf/io.hpp"

using namespace vocbf;
using namespace vocbf::agv;

TEST_CASE("step examples") {
  AgvConfig cfg;
  AgvState s = step({0, 0, 0}, 0.0, cfg);
  CHECK(s.x1 == doctest::Approx(0.006));
  CHECK(s.x2 == 0.0);
  CHECK(s.phi == 0.0);
  s = step({0, 0, 0}, 1.0, cfg);
  CHECK(s.x1 == doctest::Approx(0.006));
  CHECK(s.phi == doctest::Approx(0.01));
  s = step({0, 0, std::numbers::pi}, 1.0, cfg);
  CHECK(s.phi == doctest::Approx(-std::numbers::pi + 0.01));

  StepDiagnostics diag;
  s = step({0, 0, 0}, 5.0, cfg, &diag);
  CHECK(diag.clamped_controls == 1);
  CHECK(s.phi == doctest::Approx(0.01));
  CHECK_THROWS_AS(step({NAN, 0, 0}, 0.0, cfg), std::invalid_argument);
}

TEST_CASE("step keeps the state space and matches dt (f + g u) before clamping") {
  AgvConfig cfg;
  Rng rng(3);
  for (int i = 0; i < 10000; ++i) {
    const AgvState s = sample_state(rng, cfg);
    const double u = uniform(rng, -1, 1);
    const AgvState n = step(s, u, cfg);
    CHECK(std::abs(n.x1) <= 1.0);
    CHECK(std::abs(n.x2) <= 1.0);
    CHECK(n.phi >= -std::numbers::pi);
    CHECK(n.phi < std::numbers::pi);
    const DriftAndInput fg = analytic_fg(s, cfg);
    const Eigen::Vector3d raw = s.vec() + cfg.dt * (fg.f + fg.g * u);
    if (std::abs(raw(0)) < 1.0 && std::abs(raw(1)) < 1.0 && std::abs(raw(2)) < std::numbers::pi) {
      CHECK(n.x1 == raw(0));
      CHECK(n.x2 == raw(1));
      CHECK(n.phi == raw(2));
    }
  }
}

TEST_CASE("safety value, reward and analytic dynamics") {
  AgvConfig cfg;
  CHECK(safety_value({0, 0, 1}, cfg) == doctest::Approx(-0.2));
  CHECK(safety_value({0.2, 0, 0}, cfg) == doctest::Approx(0.0));
  CHECK(safety_value({1, 1, 0}, cfg) == doctest::Approx(std::sqrt(2.0) - 0.2));
  CHECK(reward({0.7, 0.7, 0}, cfg) == doctest::Approx(1.0));
  CHECK(reward({0.7 - 0.9, 0.7, 0}, cfg) == doctest::Approx(0.1));

  Rng rng(4);
  for (int i = 0; i < 1000; ++i) {
    const AgvState a = sample_state(rng, cfg);
    const AgvState b = sample_state(rng, cfg);
    CHECK(reward(a, cfg) > 0.0);
    CHECK(std::abs(safety_value(a, cfg) - safety_value(b, cfg)) <= std::hypot(a.x1 - b.x1, a.x2 - b.x2) + 1e-12);
  }
  DriftAndInput fg = analytic_fg({0.3, 0.1, 0.0}, cfg);
  CHECK(fg.f(0) == doctest::Approx(0.6));
  CHECK(fg.f(1) == 0.0);
  fg = analytic_fg({0, 0, std::numbers::pi / 2}, cfg);
  CHECK(std::abs(fg.f(0)) < 1e-12);
  CHECK(fg.f(1) == doctest::Approx(0.6));
  CHECK(fg.g == Eigen::Vector3d(0, 0, 1));
}

TEST_CASE("wrap_angle maps to [-pi, pi)") {
  CHECK(wrap_angle(std::numbers::pi) == -std::numbers::pi);
  CHECK(wrap_angle(3 * std::numbers::pi) == doctest::Approx(-std::numbers::pi));
  CHECK(wrap_angle(-std::numbers::pi) == -std::numbers::pi);
  CHECK(wrap_angle(0.5) == 0.5);
}

TEST_CASE("generate_dataset") {
  AgvConfig cfg;
  data::TransitionSet set = generate_dataset(75000, cfg, 1);
  CHECK(set.size() == 75000);
  CHECK(set.episode_ids().size() == 150);
  CHECK(set.state_dim == 3);
  CHECK(set.control_dim == 1);
  double sum = 0.0;
  bool has_unsafe = false;
  for (const auto& t : set.transitions) {
    CHECK(std::abs(t.u[0]) <= 1.0);
    sum += t.u[0];
    has_unsafe = has_unsafe || t.ell_x < 0.0;
  }
  // Uniform[-1, 1] has sigma = 1/sqrt(3); 3 sigma / sqrt(N) bound on the mean.
  CHECK(std::abs(sum / 75000.0) <= 3.0 / std::sqrt(3.0) / std::sqrt(75000.0));
  CHECK(has_unsafe);

  data::TransitionSet truncated = generate_dataset(1200, cfg, 1);
  CHECK(truncated.size() == 1200);
  CHECK(truncated.episode_ids().size() == 3);
  CHECK(truncated.transitions.back().step_id == 199);
  CHECK(generate_dataset(1200, cfg, 1) == truncated);
}

TEST_CASE("feature encoding and pullback") {
  Eigen::MatrixXd f = encode(FeatureMap::AgvHeading, Eigen::Vector3d(0, 0, 0));
  CHECK(f.col(0) == Eigen::Vector4d(0, 0, 0, 1));
  f = encode(FeatureMap::AgvHeading, Eigen::Vector3d(0.5, -0.5, std::numbers::pi / 2));
  CHECK((f.col(0) - Eigen::Vector4d(0.5, -0.5, 1, 0)).cwiseAbs().maxCoeff() < 1e-12);

  // d/dphi of a.sin + b.cos
  const Eigen::Vector3d x(0.1, 0.2, 0.7);
  const Eigen::Vector4d g(1.0, 2.0, 3.0, 4.0);
  Eigen::MatrixXd raw = pullback_gradient(FeatureMap::AgvHeading, x, g);
  CHECK(raw(0, 0) == 1.0);
  CHECK(raw(1, 0) == 2.0);
  CHECK(raw(2, 0) == doctest::Approx(3.0 * std::cos(0.7) - 4.0 * std::sin(0.7)));
  CHECK(parse_feature_map(feature_map_name(FeatureMap::AgvHeading)) == FeatureMap::AgvHeading);
}

TEST_CASE("dataset save and load round trip") {
  AgvConfig cfg;
  data::TransitionSet set = generate_dataset(700, cfg, 5);
  std::stringstream ss;
  data::write_csv(ss, set);
  const std::string text = ss.str();
  CHECK(text.rfind("# VOCBF-DATASET v1 env=agv_dubins dt=0.01 seed=5 state_dim=3 control_dim=1\n", 0) == 0);
  data::TransitionSet back = data::read_csv(ss, safety_fn(cfg));
  CHECK(back == set);

  std::string truncated = text.substr(0, text.rfind(',', text.size() - 2));
  std::stringstream bad(truncated);
  try {
    (void)data::read_csv(bad, safety_fn(cfg));
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.line() == 702);
  }
  std::stringstream version("# VOCBF-DATASET v9 env=agv_dubins\n");
  CHECK_THROWS_AS(data::read_csv(version, safety_fn(cfg)), ParseError);
}

TEST_CASE("split by episode") {
  AgvConfig cfg;
  cfg.horizon = 10;
  data::TransitionSet set = generate_dataset(100, cfg, 2);
  auto [train, test] = data::split(set, 0.2, 9);
  CHECK(train.episode_ids().size() == 8);
  CHECK(test.episode_ids().size() == 2);
  CHECK(train.size() + test.size() == set.size());
  const auto train_ids = train.episode_ids();
  std::set<std::int64_t> a(train_ids.begin(), train_ids.end());
  for (auto e : test.episode_ids()) CHECK(a.count(e) == 0);
  auto [train2, test2] = data::split(set, 0.2, 9);
  CHECK(train2 == train);
  CHECK(test2 == test);

  data::TransitionSet one = generate_dataset(5, cfg, 2);
  CHECK_THROWS_AS(data::split(one, 0.5, 1), std::invalid_argument);
  CHECK_THROWS_AS(data::split(set, 1.0, 1), std::invalid_argument);
}

TEST_CASE("minibatch sampling") {
  AgvConfig cfg;
  cfg.horizon = 100;
  data::TransitionSet set = generate_dataset(100, cfg, 3);
  Rng rng(1);
  CHECK(data::sample_minibatch(set, 256, rng).size() == 256);

  data::TransitionSet single = generate_dataset(1, cfg, 3);
  for (const auto& t : data::sample_minibatch(single, 5, rng)) CHECK(t == single.transitions[0]);

  Rng a(42), b(42);
  CHECK(data::sample_minibatch_indices(set, 50, a) == data::sample_minibatch_indices(set, 50, b));

  // chi-square with 99 dof; the 1% critical value is 134.64
  std::vector<double> counts(100, 0.0);
  Rng r(7);
  for (int k = 0; k < 1000; ++k) {
    for (std::size_t i : data::sample_minibatch_indices(set, 1000, r)) counts[i] += 1.0;
  }
  double chi2 = 0.0;
  for (double c : counts) chi2 += (c - 10000.0) * (c - 10000.0) / 10000.0;
  CHECK(chi2 < 134.64);
}
