#include <doctest.h>

#include <cmath>
#include <memory>
#include <numbers>

#include "vocbf/checks.hpp"
#include "vocbf/safety.hpp"

using namespace vocbf;
using namespace vocbf::safety;

namespace {

QpProblem qp1(double u_ref, double a, double b) {
  QpProblem p;
  p.u_ref = Eigen::VectorXd::Constant(1, u_ref);
  p.a = a;
  p.b = Eigen::VectorXd::Constant(1, b);
  p.lo = Eigen::VectorXd::Constant(1, -1.0);
  p.hi = Eigen::VectorXd::Constant(1, 1.0);
  return p;
}

// Linear barrier w.x + c over raw states.
std::shared_ptr<barrier::BarrierFunction> linear_barrier(Eigen::RowVector3d w, double c) {
  nn::MlpModel m = nn::mlp_init({{3, 1}, nn::Activation::ReLU, 0});
  m.params.weights[0] = w;
  m.params.biases[0](0) = c;
  return std::make_shared<barrier::BarrierFunction>(barrier::BarrierFunction{m, FeatureMap::Identity});
}

}  // namespace

TEST_CASE("qp examples") {
  QpSolution s = qp_solve(qp1(0.0, 1.0, 1.0));
  CHECK(s.status == QpStatus::InactiveOptimal);
  CHECK(s.u(0) == 0.0);
  CHECK(s.lambda == 0.0);

  s = qp_solve(qp1(0.0, -0.5, 1.0));
  CHECK(s.status == QpStatus::ActiveOptimal);
  CHECK(s.u(0) == doctest::Approx(0.5));
  CHECK(s.lambda == doctest::Approx(1.0));
  CHECK(std::abs(s.constraint_value) <= 1e-12);

  s = qp_solve(qp1(0.3, -2.0, 1.0));
  CHECK(s.status == QpStatus::Infeasible);
  CHECK(s.u(0) == 1.0);

  // b = 0: every box point maximises b.u, the nearest to u_ref is kept
  s = qp_solve(qp1(0.3, -1.0, 0.0));
  CHECK(s.status == QpStatus::Infeasible);
  CHECK(s.u(0) == 0.3);

  // u_ref outside the box with a slack constraint is clipped
  s = qp_solve(qp1(3.0, 1.0, 1.0));
  CHECK(s.status == QpStatus::InactiveOptimal);
  CHECK(s.u(0) == 1.0);

  QpProblem p2;
  p2.u_ref = Eigen::Vector2d(0.0, 0.0);
  p2.a = -0.5;
  p2.b = Eigen::Vector2d(1.0, 1.0);
  p2.lo = Eigen::Vector2d(-1.0, -1.0);
  p2.hi = Eigen::Vector2d(1.0, 1.0);
  s = qp_solve(p2);
  CHECK(s.u(0) == doctest::Approx(0.25));
  CHECK(s.u(1) == doctest::Approx(0.25));

  // one coordinate saturates, the other picks up the rest
  p2.a = -1.5;
  p2.b = Eigen::Vector2d(2.0, 1.0);
  s = qp_solve(p2);
  CHECK(s.u(0) == doctest::Approx(0.6));
  CHECK(s.u(1) == doctest::Approx(0.3));
  p2.a = -2.5;
  s = qp_solve(p2);
  CHECK(s.u(0) == doctest::Approx(1.0));
  CHECK(s.u(1) == doctest::Approx(0.5));

  // sup of the constraint over the box is -3 + 2 < 0
  p2.a = -3.0;
  p2.b = Eigen::Vector2d(1.0, 1.0);
  s = qp_solve(p2);
  CHECK(s.status == QpStatus::Infeasible);
  CHECK(s.u(0) == 1.0);
  CHECK(s.u(1) == 1.0);
}

TEST_CASE("qp rejects malformed problems") {
  QpProblem p = qp1(0.0, 0.0, 1.0);
  p.lo(0) = 1.0;
  CHECK_THROWS_AS(qp_solve(p), std::invalid_argument);
  p = qp1(0.0, std::nan(""), 1.0);
  CHECK_THROWS_AS(qp_solve(p), std::invalid_argument);
  p = qp1(0.0, 0.0, 1.0);
  p.b = Eigen::Vector2d(1, 1);
  CHECK_THROWS_AS(qp_solve(p), std::invalid_argument);
}

TEST_CASE("qp agrees with the enumeration oracle") {
  for (int m : {1, 2, 3}) {
    const checks::SuiteResult r = checks::qp_equivalence(m, 3000, 40 + static_cast<std::uint64_t>(m));
    INFO(r.detail);
    CHECK(r.passed);
    CHECK(r.failures == 0);
  }
}

TEST_CASE("qp structural properties") {
  Rng rng(77);
  for (int i = 0; i < 500; ++i) {
    QpProblem p = checks::random_qp(rng, 2, false);
    // dual constraint value is nondecreasing in lambda
    double prev = -1e300;
    for (double lam = 0.0; lam < 20.0; lam += 0.25) {
      const double v = dual_constraint_value(p, lam);
      REQUIRE(v >= prev - 1e-12);
      prev = v;
    }
    const QpSolution s = qp_solve(p);
    // positive rescaling of the constraint leaves u unchanged
    QpProblem q = p;
    q.a *= 7.5;
    q.b *= 7.5;
    const QpSolution t = qp_solve(q);
    CHECK((s.u - t.u).norm() <= 1e-9);
    CHECK(s.status == t.status);
    // minimal intervention: a feasible in-box reference is returned untouched
    const bool in_box = (p.u_ref.array() >= p.lo.array()).all() && (p.u_ref.array() <= p.hi.array()).all();
    if (in_box && p.a + p.b.dot(p.u_ref) >= 0.0) CHECK(s.u == p.u_ref);
    if (s.status != QpStatus::Infeasible) CHECK(s.constraint_value >= -1e-9);
    CHECK((s.u.array() >= p.lo.array()).all());
    CHECK((s.u.array() <= p.hi.array()).all());
  }
}

TEST_CASE("Lie derivatives of hand-built barriers") {
  const agv::AgvConfig env;
  const DynamicsProvider analytic = DynamicsProvider::analytic(env);
  Eigen::MatrixXd xs(3, 2);
  xs << 0.1, -0.3, 0.2, 0.4, 0.5, -2.0;

  LieBatch lie = lie_derivatives(*linear_barrier({1, 0, 0}, 0.0), analytic, xs);
  CHECK(lie.b(0) == doctest::Approx(0.1));
  CHECK(lie.lf(0) == doctest::Approx(0.6 * std::cos(0.5)));
  CHECK(lie.lf(1) == doctest::Approx(0.6 * std::cos(-2.0)));
  CHECK(lie.lg(0, 0) == 0.0);

  lie = lie_derivatives(*linear_barrier({0, 0, 1}, 0.0), analytic, xs);
  CHECK(lie.lf(0) == 0.0);
  CHECK(lie.lg(0, 1) == doctest::Approx(1.0));

  // sin(phi) through the heading encoding
  nn::MlpModel m = nn::mlp_init({{4, 1}, nn::Activation::ReLU, 0});
  m.params.weights[0] << 0, 1, 1, 0;
  m.params.biases[0].setZero();
  barrier::BarrierFunction sinb{m, FeatureMap::AgvHeading};
  lie = lie_derivatives(sinb, analytic, xs);
  CHECK(lie.b(1) == doctest::Approx(0.4 + std::sin(-2.0)));
  CHECK(lie.lf(1) == doctest::Approx(0.6 * std::sin(-2.0)));
  CHECK(lie.lg(0, 1) == doctest::Approx(std::cos(-2.0)));

  // a zero-head surrogate has f = g = 0
  auto zero = std::make_shared<const dyn::DynamicsSurrogate>(
      dyn::make_surrogate(3, 1, 0.01, FeatureMap::AgvHeading, {4}, 0, true));
  lie = lie_derivatives(sinb, DynamicsProvider::learned(zero), xs);
  CHECK(lie.lf.norm() == 0.0);
  CHECK(lie.lg.norm() == 0.0);
}

TEST_CASE("safe policy filters the reference") {
  const agv::AgvConfig env;
  auto ref = std::make_shared<const policy::ReferencePolicy>(policy::ReferencePolicy::goto_goal({}));
  const double phi = std::numbers::pi / 4 + 0.1;  // reference asks for -0.2
  Eigen::MatrixXd x(3, 3);
  x << 0, 0, 0, 0, 0, 0, phi, phi, phi;

  // B = phi + c, so the constraint reads phi + c + u >= 0
  SafePolicy slack(linear_barrier({0, 0, 1}, 0.0), DynamicsProvider::analytic(env), ref);
  CHECK(slack.act(x.col(0))(0, 0) == doctest::Approx(-0.2));

  SafePolicy active(linear_barrier({0, 0, 1}, -1.5), DynamicsProvider::analytic(env), ref);
  policy::ActDiagnostics diag;
  const Eigen::MatrixXd u = active.act(x, &diag);
  CHECK(u(0, 0) == doctest::Approx(1.5 - phi));
  REQUIRE(diag.infeasible.size() == 3);
  CHECK(diag.infeasible[0] == 0);

  SafePolicy hopeless(linear_barrier({0, 0, 1}, -2.0), DynamicsProvider::analytic(env), ref);
  const std::vector<QpSolution> sols = hopeless.solve(x.col(0));
  CHECK(sols[0].status == QpStatus::Infeasible);
  CHECK(sols[0].u(0) == 1.0);
  hopeless.act(x, &diag);
  CHECK(diag.infeasible[2] == 1);

  // alpha scales the B term: with alpha = 2 the requirement is u >= -2 (phi - 1.2)
  SafePolicy steep(linear_barrier({0, 0, 1}, -1.2), DynamicsProvider::analytic(env), ref, 2.0);
  CHECK(steep.act(x.col(0))(0, 0) == doctest::Approx(2.0 * (1.2 - phi)));

  CHECK_THROWS_AS(SafePolicy(nullptr, DynamicsProvider::analytic(env), ref), std::invalid_argument);
  CHECK_THROWS_AS(SafePolicy(linear_barrier({0, 0, 1}, 0.0), DynamicsProvider::analytic(env), ref, 0.0),
                  std::invalid_argument);
}

TEST_CASE("finite-difference lemma and backup contraction") {
  const checks::SuiteResult lemma = checks::fd_lemma(2000, 3);
  INFO(lemma.detail);
  CHECK(lemma.passed);
  const checks::SuiteResult backup = checks::backup_contraction(50, 0.99, 4);
  INFO(backup.detail);
  CHECK(backup.passed);
}

TEST_CASE("gradient suite") {
  const checks::SuiteResult r = checks::gradient_suite(3, 9);
  INFO(r.detail);
  CHECK(r.passed);
  CHECK(r.cases > 0);
}
