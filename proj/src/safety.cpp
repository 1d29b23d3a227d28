#include "vocbf/safety.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace vocbf::safety {

void QpProblem::validate() const {
  const Eigen::Index m = u_ref.size();
  if (m < 1 || b.size() != m || lo.size() != m || hi.size() != m) throw std::invalid_argument("QpProblem: size mismatch");
  if (!std::isfinite(a) || !u_ref.allFinite() || !b.allFinite() || !lo.allFinite() || !hi.allFinite()) {
    throw std::invalid_argument("QpProblem: non-finite data");
  }
  if (!(lo.array() < hi.array()).all()) throw std::invalid_argument("QpProblem: need lo < hi");
}

std::string to_string(QpStatus status) {
  switch (status) {
    case QpStatus::InactiveOptimal:
      return "inactive";
    case QpStatus::ActiveOptimal:
      return "active";
    case QpStatus::Infeasible:
      return "infeasible";
  }
  return "unknown";
}

namespace {

Eigen::VectorXd clip(const Eigen::VectorXd& u, const QpProblem& p) { return u.cwiseMax(p.lo).cwiseMin(p.hi); }

Eigen::VectorXd u_of(const QpProblem& p, double lambda) { return clip(p.u_ref + (0.5 * lambda) * p.b, p); }

QpSolution finish(const QpProblem& p, Eigen::VectorXd u, QpStatus status, double lambda) {
  QpSolution s;
  s.constraint_value = p.a + p.b.dot(u);
  s.u = std::move(u);
  s.status = status;
  s.lambda = lambda;
  return s;
}

// Root of the linear piece around lambda_mid, or NaN if the piece is flat.
double linear_piece_root(const QpProblem& p, double lambda_mid) {
  const Eigen::VectorXd raw = p.u_ref + (0.5 * lambda_mid) * p.b;
  double offset = p.a;
  double slope = 0.0;
  for (Eigen::Index i = 0; i < raw.size(); ++i) {
    if (raw(i) <= p.lo(i)) {
      offset += p.b(i) * p.lo(i);
    } else if (raw(i) >= p.hi(i)) {
      offset += p.b(i) * p.hi(i);
    } else {
      offset += p.b(i) * p.u_ref(i);
      slope += 0.5 * p.b(i) * p.b(i);
    }
  }
  return slope > 0.0 ? -offset / slope : std::nan("");
}

}  // namespace

double dual_constraint_value(const QpProblem& p, double lambda) { return p.a + p.b.dot(u_of(p, lambda)); }

QpSolution qp_solve(const QpProblem& p) {
  p.validate();
  Eigen::VectorXd u0 = clip(p.u_ref, p);
  if (p.a + p.b.dot(u0) >= 0.0) return finish(p, std::move(u0), QpStatus::InactiveOptimal, 0.0);

  // sup over the box of a + b.u
  double sup = p.a;
  for (Eigen::Index i = 0; i < p.b.size(); ++i) sup += std::max(p.b(i) * p.lo(i), p.b(i) * p.hi(i));
  if (sup < 0.0) {
    Eigen::VectorXd u(p.b.size());
    for (Eigen::Index i = 0; i < u.size(); ++i) {
      u(i) = p.b(i) > 0.0 ? p.hi(i) : p.b(i) < 0.0 ? p.lo(i) : std::clamp(p.u_ref(i), p.lo(i), p.hi(i));
    }
    return finish(p, std::move(u), QpStatus::Infeasible, 0.0);
  }

  // Bracket [lo_l, hi_l] with value(lo_l) < 0 <= value(hi_l).
  double lo_l = 0.0;
  double hi_l = 1.0;
  for (int k = 0; dual_constraint_value(p, hi_l) < 0.0; ++k) {
    lo_l = hi_l;
    hi_l *= 2.0;
    if (k > 2000) {
      // Only reachable when sup rounds to exactly 0; every coordinate is saturated.
      break;
    }
  }
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo_l + hi_l);
    if (mid <= lo_l || mid >= hi_l) break;
    const double v = dual_constraint_value(p, mid);
    if (v < 0.0) {
      lo_l = mid;
    } else {
      hi_l = mid;
    }
    if (std::abs(v) <= 1e-10 && hi_l - lo_l <= 1e-12 * std::max(1.0, hi_l)) break;
  }
  // Polish: solve the linear piece exactly and keep it if it stays feasible.
  double lambda = hi_l;
  const double root = linear_piece_root(p, 0.5 * (lo_l + hi_l));
  if (std::isfinite(root) && root >= 0.0 && dual_constraint_value(p, root) >= 0.0) {
    if (std::abs(root - hi_l) <= std::max(1e-6, 1e-6 * hi_l)) lambda = root;
  }
  return finish(p, u_of(p, lambda), QpStatus::ActiveOptimal, lambda);
}

DynamicsProvider DynamicsProvider::analytic(const agv::AgvConfig& cfg) {
  DynamicsProvider d;
  d.agv_ = cfg;
  return d;
}

DynamicsProvider DynamicsProvider::learned(std::shared_ptr<const dyn::DynamicsSurrogate> surrogate) {
  if (!surrogate) throw std::invalid_argument("learned dynamics provider needs a surrogate");
  DynamicsProvider d;
  d.surrogate_ = std::move(surrogate);
  return d;
}

int DynamicsProvider::control_dim() const { return surrogate_ ? surrogate_->control_dim : agv::kControlDim; }

dyn::FgBatch DynamicsProvider::eval(const Eigen::Ref<const Eigen::MatrixXd>& states) const {
  if (surrogate_) return dyn::eval_fg_batch(*surrogate_, states);
  if (states.rows() != agv::kStateDim) throw std::invalid_argument("analytic dynamics expect AGV states");
  dyn::FgBatch out{Eigen::MatrixXd(3, states.cols()), Eigen::MatrixXd(3, states.cols())};
  for (Eigen::Index j = 0; j < states.cols(); ++j) {
    const agv::DriftAndInput fg = agv::analytic_fg(agv::AgvState::from(states.col(j)), agv_);
    out.f.col(j) = fg.f;
    out.g.col(j) = fg.g;
  }
  return out;
}

LieBatch lie_derivatives(const barrier::BarrierFunction& barrier, const DynamicsProvider& provider,
                         const Eigen::Ref<const Eigen::MatrixXd>& states) {
  const nn::ValuesAndInputGrads vg = barrier.values_and_grads(states);
  const dyn::FgBatch fg = provider.eval(states);
  const Eigen::Index n = states.rows();
  const int m = provider.control_dim();
  LieBatch out;
  out.b = vg.values;
  out.lf = (vg.grads.array() * fg.f.array()).colwise().sum();
  out.lg.resize(m, states.cols());
  for (int c = 0; c < m; ++c) {
    out.lg.row(c) = (vg.grads.array() * fg.g.middleRows(c * n, n).array()).colwise().sum();
  }
  return out;
}

SafePolicy::SafePolicy(std::shared_ptr<const barrier::BarrierFunction> barrier, DynamicsProvider provider,
                       std::shared_ptr<const policy::Controller> reference, double alpha, double u_lo, double u_hi)
    : barrier_(std::move(barrier)),
      provider_(std::move(provider)),
      reference_(std::move(reference)),
      alpha_(alpha),
      u_lo_(u_lo),
      u_hi_(u_hi) {
  if (!barrier_ || !reference_) throw std::invalid_argument("SafePolicy needs a barrier and a reference policy");
  if (!(alpha_ > 0.0)) throw std::invalid_argument("SafePolicy: alpha must be positive");
  if (!(u_lo_ < u_hi_)) throw std::invalid_argument("SafePolicy: empty control box");
  if (provider_.control_dim() != reference_->control_dim()) {
    throw std::invalid_argument("SafePolicy: control dimension mismatch");
  }
}

std::vector<QpSolution> SafePolicy::solve(const Eigen::Ref<const Eigen::MatrixXd>& states) const {
  const Eigen::MatrixXd u_ref = reference_->act(states);
  const LieBatch lie = lie_derivatives(*barrier_, provider_, states);
  const Eigen::Index m = u_ref.rows();
  std::vector<QpSolution> out;
  out.reserve(static_cast<std::size_t>(states.cols()));
  QpProblem p;
  p.lo = Eigen::VectorXd::Constant(m, u_lo_);
  p.hi = Eigen::VectorXd::Constant(m, u_hi_);
  for (Eigen::Index j = 0; j < states.cols(); ++j) {
    p.u_ref = u_ref.col(j);
    p.a = lie.lf(j) + alpha_ * lie.b(j);
    p.b = lie.lg.col(j);
    out.push_back(qp_solve(p));
  }
  return out;
}

Eigen::MatrixXd SafePolicy::act(const Eigen::Ref<const Eigen::MatrixXd>& states, policy::ActDiagnostics* diag) const {
  const std::vector<QpSolution> sols = solve(states);
  Eigen::MatrixXd u(control_dim(), states.cols());
  if (diag) diag->infeasible.assign(sols.size(), 0);
  for (std::size_t j = 0; j < sols.size(); ++j) {
    u.col(static_cast<Eigen::Index>(j)) = sols[j].u;
    if (diag && sols[j].status == QpStatus::Infeasible) diag->infeasible[j] = 1;
  }
  return u;
}

}  // namespace vocbf::safety
