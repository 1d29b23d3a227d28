#include <doctest.h>

#include <cmath>
#include <sstream>

#include "vocbf/evaluation.hpp"

using namespace vocbf;
using namespace vocbf::eval;

namespace {

class Constant : public policy::Controller {
 public:
  explicit Constant(double u) : u_(u) {}
  Eigen::MatrixXd act(const Eigen::Ref<const Eigen::MatrixXd>& states, policy::ActDiagnostics* diag) const override {
    if (diag) diag->infeasible.assign(static_cast<std::size_t>(states.cols()), flag_ ? 1 : 0);
    return Eigen::MatrixXd::Constant(1, states.cols(), u_);
  }
  int control_dim() const override { return 1; }
  bool flag_ = false;

 private:
  double u_;
};

double goal_reward(double x1, double x2) { return 0.1 / (std::hypot(x1 - 0.7, x2 - 0.7) + 0.1); }

}  // namespace

TEST_CASE("episode starting inside the obstacle") {
  agv::AgvConfig cfg;
  Rng rng(1);
  const RolloutResult r = rollout(Constant(0.0), {0.05, 0.0, 1.0}, cfg, 0.0, rng);
  CHECK_FALSE(r.safe);
  CHECK(r.first_violation_step == 0);
  CHECK(r.total_reward == 0.0);
  CHECK(r.steps_taken == 0);
}

TEST_CASE("straight-line episodes against a closed form") {
  agv::AgvConfig cfg;
  Rng rng(1);
  // heads at the obstacle: x1(t) = -0.503 + 0.006 t is first inside at t = 51
  RolloutResult r = rollout(Constant(0.0), {-0.503, 0.0, 0.0}, cfg, 0.0, rng);
  CHECK_FALSE(r.safe);
  CHECK(r.first_violation_step == 51);
  double expect = 0.0;
  for (int t = 0; t < 51; ++t) expect += goal_reward(-0.503 + 0.006 * t, 0.0);
  CHECK(r.total_reward == doctest::Approx(expect).epsilon(1e-9));

  // runs into the wall at x1 = 1 and stays there for the full horizon
  r = rollout(Constant(0.0), {0.5, 0.5, 0.0}, cfg, 0.0, rng);
  CHECK(r.safe);
  CHECK_FALSE(r.first_violation_step.has_value());
  CHECK(r.steps_taken == 500);
  expect = 0.0;
  for (int t = 0; t < 500; ++t) expect += goal_reward(std::min(0.5 + 0.006 * t, 1.0), 0.5);
  CHECK(r.total_reward == doctest::Approx(expect).epsilon(1e-9));
}

TEST_CASE("batched episodes match single rollouts and ignore the thread count") {
  agv::AgvConfig cfg;
  const auto ref = policy::ReferencePolicy::goto_goal({});
  const Eigen::MatrixXd x0 = sample_initial_states(150, cfg, 5, false);
  BatchOptions opt;
  opt.noise_sigma = 0.3;
  opt.noise_seed = 99;
  opt.chunk_size = 16;
  const auto one = run_episodes(ref, x0, cfg, opt);
  opt.threads = 4;
  const auto four = run_episodes(ref, x0, cfg, opt);
  CHECK(one == four);
  opt.chunk_size = 7;
  CHECK(run_episodes(ref, x0, cfg, opt) == one);

  int unsafe = 0;
  for (std::size_t i = 0; i < 150; ++i) {
    Rng rng(derive_seed(99, i));
    const RolloutResult r = rollout(ref, agv::AgvState::from(x0.col(static_cast<Eigen::Index>(i))), cfg, 0.3, rng);
    REQUIRE(r == one[i]);
    unsafe += r.safe ? 0 : 1;
  }
  CHECK(unsafe > 0);  // the nominal controller ignores the obstacle
  opt.threads = 0;
  CHECK_THROWS_AS(run_episodes(ref, x0, cfg, opt), std::invalid_argument);
}

TEST_CASE("initial states") {
  agv::AgvConfig cfg;
  const Eigen::MatrixXd a = sample_initial_states(2000, cfg, 3, true);
  for (Eigen::Index j = 0; j < a.cols(); ++j) REQUIRE(agv::safety_value(agv::AgvState::from(a.col(j)), cfg) >= 0.0);
  const Eigen::MatrixXd b = sample_initial_states(2000, cfg, 3, false);
  int inside = 0;
  for (Eigen::Index j = 0; j < b.cols(); ++j) inside += agv::safety_value(agv::AgvState::from(b.col(j)), cfg) < 0.0;
  // obstacle covers pi 0.04 / 4 of the square, about 3.1 %
  CHECK(inside > 30);
  CHECK(inside < 100);
  CHECK(sample_initial_states(2000, cfg, 3, true) == a);
}

TEST_CASE("suite statistics") {
  agv::AgvConfig cfg;
  const auto ref = policy::ReferencePolicy::goto_goal({});
  SuiteConfig suite;
  suite.seeds = {1, 2, 3};
  suite.episodes = 60;
  const TableRow row = eval_suite("ref", ref, cfg, suite);
  REQUIRE(row.per_seed.size() == 3);
  double m = 0.0;
  for (const auto& s : row.per_seed) m += s.safe_pct / 3.0;
  double v = 0.0;
  for (const auto& s : row.per_seed) v += (s.safe_pct - m) * (s.safe_pct - m) / 3.0;
  CHECK(row.safe_pct == doctest::Approx(m));
  CHECK(row.safe_std == doctest::Approx(std::sqrt(v)));
  CHECK(row.per_seed[0].safe_pct == doctest::Approx(100.0 * row.per_seed[0].safe_episodes / 60.0));
  CHECK(row.infeasible_pct() == 0.0);
  suite.threads = 3;
  CHECK(eval_suite("ref", ref, cfg, suite).safe_pct == row.safe_pct);

  Constant flagged(0.0);
  flagged.flag_ = true;
  CHECK(eval_suite("flag", flagged, cfg, suite).infeasible_pct() == 100.0);

  // SSV counts in-obstacle starts as failures
  const double ssv = safe_set_volume(Constant(0.0), 400, cfg, 8);
  const Eigen::MatrixXd x0 = sample_initial_states(400, cfg, 8, false);
  int safe = 0;
  for (Eigen::Index j = 0; j < x0.cols(); ++j) {
    Rng rng(0);
    safe += rollout(Constant(0.0), agv::AgvState::from(x0.col(j)), cfg, 0.0, rng).safe;
  }
  CHECK(ssv == doctest::Approx(100.0 * safe / 400.0));
}

TEST_CASE("table output") {
  ExperimentTable t;
  t.name = "tau";
  t.param_name = "tau";
  TableRow r;
  r.label = "vocbf";
  r.param = 0.9;
  r.safe_pct = 95.5;
  r.safe_std = 0.25;
  r.reward = 100.0;
  r.reward_std = 1.5;
  r.per_seed.push_back({11, 10, 9, 90.0, 3.0, 40, 2});
  t.rows.push_back(r);
  std::ostringstream csv;
  write_table_csv(csv, t);
  CHECK(csv.str() == "tau,label,safe_pct,safe_std,reward,reward_std\n0.9,vocbf,95.5,0.25,100,1.5\n");
  std::ostringstream plot;
  write_plot_data(plot, t);
  CHECK(plot.str().find("tau,vocbf,0.9,11,safe_pct,90\n") != std::string::npos);
  CHECK(plot.str().find("tau,vocbf,0.9,11,infeasible_steps,2\n") != std::string::npos);
  CHECK(t.row("vocbf").safe_pct == 95.5);
  CHECK_THROWS_AS(t.row("missing"), std::out_of_range);
  CHECK(r.infeasible_pct() == 5.0);
  CHECK(summarize(t).find("vocbf: safe 95.50 +- 0.25 %") != std::string::npos);
}
