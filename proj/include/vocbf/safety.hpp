#pragma once

// Barrier-constrained QP safety filter
//     min ||u - u_ref||^2  s.t.  a + b.u >= 0,  lo <= u <= hi
// with a = LfB(x) + alpha B(x) and b = LgB(x).

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "vocbf/agv.hpp"
#include "vocbf/barrier.hpp"
#include "vocbf/dynamics.hpp"
#include "vocbf/policy.hpp"

namespace vocbf::safety {

struct QpProblem {
  Eigen::VectorXd u_ref;
  double a = 0.0;
  Eigen::VectorXd b;
  Eigen::VectorXd lo;
  Eigen::VectorXd hi;

  /// Throws std::invalid_argument on mismatched sizes, lo >= hi or non-finite data.
  void validate() const;
};

enum class QpStatus { InactiveOptimal, ActiveOptimal, Infeasible };

std::string to_string(QpStatus status);

struct QpSolution {
  Eigen::VectorXd u;
  QpStatus status = QpStatus::InactiveOptimal;
  double lambda = 0.0;
  double constraint_value = 0.0;  // a + b.u
};

/// Exact solution by scalar dual bisection over lambda with
/// u(lambda) = clip(u_ref + lambda/2 b), finished by solving the linear
/// piece that contains the root. Infeasible problems return the maximiser
/// of b.u over the box that is nearest u_ref.
QpSolution qp_solve(const QpProblem& p);

/// a + b.clip(u_ref + lambda/2 b): continuous, piecewise linear, nondecreasing.
double dual_constraint_value(const QpProblem& p, double lambda);

/// Where f and g come from when forming Lie derivatives.
class DynamicsProvider {
 public:
  static DynamicsProvider analytic(const agv::AgvConfig& cfg);
  static DynamicsProvider learned(std::shared_ptr<const dyn::DynamicsSurrogate> surrogate);

  /// f (n x k) and g ((n*m) x k, column-major blocks).
  dyn::FgBatch eval(const Eigen::Ref<const Eigen::MatrixXd>& states) const;
  int control_dim() const;
  bool is_learned() const { return surrogate_ != nullptr; }

 private:
  agv::AgvConfig agv_;
  std::shared_ptr<const dyn::DynamicsSurrogate> surrogate_;
};

struct LieBatch {
  Eigen::RowVectorXd lf;  // 1 x k
  Eigen::MatrixXd lg;     // m x k
  Eigen::RowVectorXd b;   // 1 x k
};

LieBatch lie_derivatives(const barrier::BarrierFunction& barrier, const DynamicsProvider& provider,
                         const Eigen::Ref<const Eigen::MatrixXd>& states);

/// pi_ref filtered through the QP. Infeasible columns are flagged in the
/// diagnostics and receive the QP's best-effort action.
class SafePolicy : public policy::Controller {
 public:
  SafePolicy(std::shared_ptr<const barrier::BarrierFunction> barrier, DynamicsProvider provider,
             std::shared_ptr<const policy::Controller> reference, double alpha = 1.0, double u_lo = -1.0,
             double u_hi = 1.0);

  Eigen::MatrixXd act(const Eigen::Ref<const Eigen::MatrixXd>& states,
                      policy::ActDiagnostics* diag = nullptr) const override;
  int control_dim() const override { return reference_->control_dim(); }

  /// Full per-column solutions, for inspection.
  std::vector<QpSolution> solve(const Eigen::Ref<const Eigen::MatrixXd>& states) const;

 private:
  std::shared_ptr<const barrier::BarrierFunction> barrier_;
  DynamicsProvider provider_;
  std::shared_ptr<const policy::Controller> reference_;
  double alpha_;
  double u_lo_;
  double u_hi_;
};

}  // namespace vocbf::safety
