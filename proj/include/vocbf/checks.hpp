#pragma once

// Independent oracles and randomized property suites. Shared by the unit
// tests, the acceptance binary and `vocbf check`.

#include <cstdint>
#include <string>
#include <vector>

#include "vocbf/rng.hpp"
#include "vocbf/safety.hpp"

namespace vocbf::checks {

struct SuiteResult {
  std::string name;
  std::size_t cases = 0;
  std::size_t failures = 0;
  double worst = 0.0;  // largest observed error statistic
  std::string detail;
  bool passed = false;
};

// ---- QP ---------------------------------------------------------------

/// Exhaustive optimum over the 3^m box-activity patterns times
/// {constraint active, inactive}, each solved in closed form. m <= 3.
safety::QpSolution qp_oracle(const safety::QpProblem& p);

/// Random instance. Degenerate instances may have zero gradient
/// coordinates, a = 0 exactly, or u_ref outside the box.
safety::QpProblem random_qp(Rng& rng, int m, bool degenerate);

/// qp_solve vs qp_oracle: solution gap <= 1e-6, objective gap <= 1e-10,
/// identical feasibility verdicts.
SuiteResult qp_equivalence(int m, std::size_t n_instances, std::uint64_t seed);

// ---- finite-difference barrier condition --------------------------------

/// min{a/dt, b} = 0  <=>  min{a, b} = 0 for dt in (0, 1].
SuiteResult fd_lemma(std::size_t n_samples, std::uint64_t seed);

// ---- tabular backup -----------------------------------------------------

/// Deterministic tabular system: state i moves to next[i].
struct TabularSystem {
  std::vector<double> ell;
  std::vector<std::size_t> next;
};

TabularSystem random_tabular(Rng& rng, std::size_t n_states);

/// (TB)(i) = (1 - gamma) ell(i) + gamma min{ell(i), B(next(i))}.
std::vector<double> tabular_backup(const TabularSystem& sys, const std::vector<double>& b, double gamma);

/// Iterates the backup from `init` until the sup-norm change is <= tol.
std::vector<double> value_iteration(const TabularSystem& sys, double gamma, std::vector<double> init,
                                    double tol = 1e-14, int max_iters = 100000);

/// Contraction in sup norm on random B1, B2, geometric convergence of value
/// iteration at rate <= gamma, and min ell <= B* <= max ell.
SuiteResult backup_contraction(std::size_t n_systems, double gamma, std::uint64_t seed);

// ---- gradients ----------------------------------------------------------

/// Parameter and input gradients vs central differences on randomized
/// three-layer nets, `nets_per_loss` per loss kind.
SuiteResult gradient_suite(std::size_t nets_per_loss, std::uint64_t seed, double step = 1e-5,
                           double tolerance = 1e-4);

}  // namespace vocbf::checks
