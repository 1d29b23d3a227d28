#include "vocbf/checks.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "vocbf/gradcheck.hpp"

namespace vocbf::checks {

using safety::QpProblem;
using safety::QpSolution;
using safety::QpStatus;

namespace {

constexpr double kBoxTol = 1e-12;
constexpr double kConstraintTol = 1e-9;

double objective(const QpProblem& p, const Eigen::VectorXd& u) { return (u - p.u_ref).squaredNorm(); }

bool in_box(const QpProblem& p, const Eigen::VectorXd& u) {
  return ((u - p.lo).array() >= -kBoxTol).all() && ((p.hi - u).array() >= -kBoxTol).all();
}

// Pattern digit per coordinate: 0 = at lo, 1 = free, 2 = at hi.
std::vector<int> pattern_digits(int code, int m, int base) {
  std::vector<int> d(static_cast<std::size_t>(m));
  for (int i = 0; i < m; ++i) {
    d[static_cast<std::size_t>(i)] = code % base;
    code /= base;
  }
  return d;
}

int int_pow(int base, int exp) {
  int r = 1;
  for (int i = 0; i < exp; ++i) r *= base;
  return r;
}

}  // namespace

QpSolution qp_oracle(const QpProblem& p) {
  p.validate();
  const int m = static_cast<int>(p.u_ref.size());
  if (m > 3) throw std::invalid_argument("qp_oracle supports m <= 3");

  bool found = false;
  Eigen::VectorXd best;
  double best_obj = std::numeric_limits<double>::infinity();
  for (int code = 0; code < int_pow(3, m); ++code) {
    const auto digits = pattern_digits(code, m, 3);
    Eigen::VectorXd u = p.u_ref;
    double fixed_dot = 0.0;
    double free_b_sq = 0.0;
    double free_b_ref = 0.0;
    for (int i = 0; i < m; ++i) {
      const int d = digits[static_cast<std::size_t>(i)];
      if (d == 0) u(i) = p.lo(i);
      if (d == 2) u(i) = p.hi(i);
      if (d == 1) {
        free_b_sq += p.b(i) * p.b(i);
        free_b_ref += p.b(i) * p.u_ref(i);
      } else {
        fixed_dot += p.b(i) * u(i);
      }
    }
    for (int active = 0; active < 2; ++active) {
      Eigen::VectorXd cand = u;
      if (active) {
        // min sum_free (u_i - r_i)^2 s.t. sum_free b_i u_i = -a - fixed_dot
        const double rhs = -p.a - fixed_dot;
        if (free_b_sq == 0.0) {
          if (std::abs(rhs) > kConstraintTol) continue;
        } else {
          const double mu = (rhs - free_b_ref) / free_b_sq;
          for (int i = 0; i < m; ++i) {
            if (digits[static_cast<std::size_t>(i)] == 1) cand(i) = p.u_ref(i) + mu * p.b(i);
          }
        }
      }
      if (!in_box(p, cand) || p.a + p.b.dot(cand) < -kConstraintTol) continue;
      const double obj = objective(p, cand);
      if (!found || obj < best_obj) {
        found = true;
        best = cand.cwiseMax(p.lo).cwiseMin(p.hi);
        best_obj = obj;
      }
    }
  }

  QpSolution s;
  if (found) {
    const Eigen::VectorXd clipped = p.u_ref.cwiseMax(p.lo).cwiseMin(p.hi);
    const bool inactive = p.a + p.b.dot(clipped) >= 0.0;
    s.u = inactive ? clipped : best;
    s.status = inactive ? QpStatus::InactiveOptimal : QpStatus::ActiveOptimal;
  } else {
    // Best effort: maximise b.u over the box, then stay nearest u_ref.
    double best_dot = -std::numeric_limits<double>::infinity();
    for (int code = 0; code < int_pow(3, m); ++code) {
      const auto digits = pattern_digits(code, m, 3);
      Eigen::VectorXd cand(m);
      for (int i = 0; i < m; ++i) {
        const int d = digits[static_cast<std::size_t>(i)];
        cand(i) = d == 0 ? p.lo(i) : d == 2 ? p.hi(i) : std::clamp(p.u_ref(i), p.lo(i), p.hi(i));
      }
      const double dot = p.b.dot(cand);
      const double obj = objective(p, cand);
      if (dot > best_dot || (dot == best_dot && obj < best_obj)) {
        best_dot = dot;
        best_obj = obj;
        best = cand;
      }
    }
    s.u = best;
    s.status = QpStatus::Infeasible;
  }
  s.constraint_value = p.a + p.b.dot(s.u);
  return s;
}

QpProblem random_qp(Rng& rng, int m, bool degenerate) {
  QpProblem p;
  p.u_ref.resize(m);
  p.b.resize(m);
  p.lo.resize(m);
  p.hi.resize(m);
  for (int i = 0; i < m; ++i) {
    const double lo = uniform(rng, -2.0, 0.5);
    p.lo(i) = lo;
    p.hi(i) = lo + uniform(rng, 0.1, 2.5);
    p.b(i) = uniform(rng, -3.0, 3.0);
    const double span = p.hi(i) - p.lo(i);
    p.u_ref(i) = uniform(rng, p.lo(i) - span, p.hi(i) + span);
  }
  p.a = uniform(rng, -4.0, 2.0);
  if (degenerate) {
    switch (std::uniform_int_distribution<int>(0, 3)(rng)) {
      case 0:
        p.b(std::uniform_int_distribution<int>(0, m - 1)(rng)) = 0.0;
        break;
      case 1:
        p.a = 0.0;
        break;
      case 2:
        p.b.setZero();
        break;
      default:
        for (int i = 0; i < m; ++i) p.u_ref(i) = p.hi(i) + uniform(rng, 0.0, 2.0);
        break;
    }
  }
  return p;
}

SuiteResult qp_equivalence(int m, std::size_t n_instances, std::uint64_t seed) {
  SuiteResult r;
  r.name = "qp_equivalence_m" + std::to_string(m);
  Rng rng(derive_seed(seed, static_cast<std::uint64_t>(m)));
  double worst_u = 0.0;
  double worst_obj = 0.0;
  std::size_t verdict_mismatch = 0;
  for (std::size_t k = 0; k < n_instances; ++k) {
    const QpProblem p = random_qp(rng, m, k % 4 == 0);
    const QpSolution a = safety::qp_solve(p);
    const QpSolution b = qp_oracle(p);
    ++r.cases;
    const bool a_inf = a.status == QpStatus::Infeasible;
    const bool b_inf = b.status == QpStatus::Infeasible;
    const double du = (a.u - b.u).norm();
    const double dobj = std::abs(objective(p, a.u) - objective(p, b.u));
    worst_u = std::max(worst_u, du);
    if (!a_inf && !b_inf) worst_obj = std::max(worst_obj, dobj);
    bool bad = a_inf != b_inf || du > 1e-6 || (!a_inf && dobj > 1e-10);
    if (!a_inf && a.constraint_value < -1e-8) bad = true;
    if (a_inf != b_inf) ++verdict_mismatch;
    if (bad) ++r.failures;
  }
  r.worst = worst_u;
  std::ostringstream d;
  d << "max |du|=" << worst_u << " max |dobj|=" << worst_obj << " verdict mismatches=" << verdict_mismatch;
  r.detail = d.str();
  r.passed = r.failures == 0;
  return r;
}

SuiteResult fd_lemma(std::size_t n_samples, std::uint64_t seed) {
  SuiteResult r;
  r.name = "fd_lemma";
  Rng rng(seed);
  for (std::size_t k = 0; k < n_samples; ++k) {
    double a = uniform(rng, -10.0, 10.0);
    double b = uniform(rng, -10.0, 10.0);
    const double dt = 1.0 - uniform(rng, 0.0, 1.0);  // (0, 1]
    switch (k % 4) {
      case 0:
        a = 0.0;
        break;
      case 1:
        b = 0.0;
        break;
      case 2:
        a = 0.0;
        b = std::abs(b);
        break;
      default:
        break;  // neither is forced to 0
    }
    const bool lhs = std::min(a / dt, b) == 0.0;
    const bool rhs = std::min(a, b) == 0.0;
    ++r.cases;
    if (lhs != rhs) ++r.failures;
  }
  r.detail = std::to_string(r.failures) + " counterexamples";
  r.passed = r.failures == 0;
  return r;
}

TabularSystem random_tabular(Rng& rng, std::size_t n_states) {
  TabularSystem sys;
  std::uniform_int_distribution<std::size_t> pick(0, n_states - 1);
  for (std::size_t i = 0; i < n_states; ++i) {
    sys.ell.push_back(uniform(rng, -1.0, 1.0));
    sys.next.push_back(pick(rng));
  }
  return sys;
}

std::vector<double> tabular_backup(const TabularSystem& sys, const std::vector<double>& b, double gamma) {
  std::vector<double> out(b.size());
  for (std::size_t i = 0; i < b.size(); ++i) {
    out[i] = (1.0 - gamma) * sys.ell[i] + gamma * std::min(sys.ell[i], b[sys.next[i]]);
  }
  return out;
}

namespace {

double sup_dist(const std::vector<double>& x, const std::vector<double>& y) {
  double d = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) d = std::max(d, std::abs(x[i] - y[i]));
  return d;
}

}  // namespace

std::vector<double> value_iteration(const TabularSystem& sys, double gamma, std::vector<double> init, double tol,
                                    int max_iters) {
  for (int it = 0; it < max_iters; ++it) {
    std::vector<double> next = tabular_backup(sys, init, gamma);
    const double change = sup_dist(next, init);
    init = std::move(next);
    if (change <= tol) break;
  }
  return init;
}

SuiteResult backup_contraction(std::size_t n_systems, double gamma, std::uint64_t seed) {
  SuiteResult r;
  r.name = "backup_contraction";
  Rng rng(seed);
  double worst_ratio = 0.0;
  for (std::size_t k = 0; k < n_systems; ++k) {
    const std::size_t n = 2 + k % 40;
    const TabularSystem sys = random_tabular(rng, n);
    bool ok = true;
    for (int trial = 0; trial < 10; ++trial) {
      std::vector<double> b1(n), b2(n);
      for (std::size_t i = 0; i < n; ++i) {
        b1[i] = uniform(rng, -2.0, 2.0);
        b2[i] = uniform(rng, -2.0, 2.0);
      }
      const double before = sup_dist(b1, b2);
      const double after = sup_dist(tabular_backup(sys, b1, gamma), tabular_backup(sys, b2, gamma));
      if (before > 0.0) worst_ratio = std::max(worst_ratio, after / before);
      if (after > gamma * before + 1e-15) ok = false;
    }
    // Geometric convergence towards the fixpoint.
    std::vector<double> b(n);
    for (auto& v : b) v = uniform(rng, -2.0, 2.0);
    const std::vector<double> fix = value_iteration(sys, gamma, b);
    double err = sup_dist(b, fix);
    for (int it = 0; it < 200 && err > 1e-9; ++it) {
      b = tabular_backup(sys, b, gamma);
      const double next_err = sup_dist(b, fix);
      if (next_err > gamma * err + 1e-13) ok = false;
      err = next_err;
    }
    const auto [lo, hi] = std::minmax_element(sys.ell.begin(), sys.ell.end());
    for (double v : fix) {
      if (v < *lo - 1e-12 || v > *hi + 1e-12) ok = false;
    }
    ++r.cases;
    if (!ok) ++r.failures;
  }
  r.worst = worst_ratio;
  std::ostringstream d;
  d << "max contraction ratio=" << worst_ratio << " (gamma=" << gamma << ")";
  r.detail = d.str();
  r.passed = r.failures == 0;
  return r;
}

SuiteResult gradient_suite(std::size_t nets_per_loss, std::uint64_t seed, double step, double tolerance) {
  SuiteResult r;
  r.name = "gradients";
  nn::GradCheckOptions opt;
  opt.step = step;
  opt.tolerance = tolerance;
  Rng rng(seed);
  std::uniform_int_distribution<int> width(2, 12);
  std::uniform_int_distribution<int> batch(1, 8);
  std::string worst_where;
  for (int kind = 0; kind < 3; ++kind) {
    for (std::size_t k = 0; k < nets_per_loss; ++k) {
      const int in = width(rng);
      const int out = kind == 2 ? width(rng) % 3 + 1 : 1;
      nn::MlpSpec spec{{in, width(rng), width(rng), out}, nn::Activation::ReLU, rng()};
      nn::MlpModel model = nn::mlp_init(spec);
      for (auto& bvec : model.params.biases) {
        for (Eigen::Index i = 0; i < bvec.size(); ++i) bvec(i) = uniform(rng, -0.5, 0.5);
      }
      const int n = batch(rng);
      Eigen::MatrixXd x(in, n);
      for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = uniform(rng, -1.5, 1.5);
      Eigen::MatrixXd t(out, n);
      for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] = uniform(rng, -1.0, 1.0);

      nn::LossSpec loss;
      std::string label;
      if (kind == 0) {
        loss = nn::SquaredError{t};
        label = "squared";
      } else if (kind == 1) {
        loss = nn::ExpectileError{t, uniform(rng, 0.05, 0.95)};
        label = "expectile";
      } else {
        // log-cosh to caller-supplied targets
        loss = nn::CustomLoss{[t](const Eigen::MatrixXd& o, Eigen::MatrixXd& g) {
          const double inv_n = 1.0 / static_cast<double>(o.cols());
          const Eigen::ArrayXXd d = (o - t).array();
          g = (inv_n * d.tanh()).matrix();
          return inv_n * d.cosh().log().sum();
        }};
        label = "custom";
      }
      const nn::GradReport pg = nn::check_param_grad(model, x, loss, opt);
      ++r.cases;
      if (!pg.passed) ++r.failures;
      if (pg.max_relative_error > r.worst) {
        r.worst = pg.max_relative_error;
        worst_where = label + " " + pg.worst_parameter_index;
      }
      if (out == 1) {
        const nn::GradReport ig = nn::check_input_grad(model, x.col(0), opt);
        ++r.cases;
        if (!ig.passed) ++r.failures;
        if (ig.max_relative_error > r.worst) {
          r.worst = ig.max_relative_error;
          worst_where = label + " input " + ig.worst_parameter_index;
        }
      }
    }
  }
  std::ostringstream d;
  d << "max rel err=" << r.worst << " at " << (worst_where.empty() ? "-" : worst_where);
  r.detail = d.str();
  r.passed = r.failures == 0;
  return r;
}

}  // namespace vocbf::checks
