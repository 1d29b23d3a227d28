#include "vocbf/agv.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace vocbf::agv {

void validate(const AgvConfig& cfg) {
  if (!(cfg.v > 0.0)) throw std::invalid_argument("AgvConfig: v must be positive");
  if (!(cfg.dt > 0.0)) throw std::invalid_argument("AgvConfig: dt must be positive");
  if (!(cfg.u_bound > 0.0)) throw std::invalid_argument("AgvConfig: u_bound must be positive");
  if (!(cfg.obstacle_radius > 0.0)) throw std::invalid_argument("AgvConfig: obstacle radius must be positive");
  if (!(cfg.reward_eps > 0.0)) throw std::invalid_argument("AgvConfig: reward_eps must be positive");
  if (!(cfg.position_bound > 0.0)) throw std::invalid_argument("AgvConfig: position_bound must be positive");
  if (cfg.horizon < 1) throw std::invalid_argument("AgvConfig: horizon must be >= 1");
  const double gd = std::hypot(cfg.goal[0] - cfg.obstacle_center[0], cfg.goal[1] - cfg.obstacle_center[1]);
  if (!(gd > cfg.obstacle_radius)) throw std::invalid_argument("AgvConfig: goal lies inside the obstacle");
}

double wrap_angle(double angle) {
  constexpr double pi = std::numbers::pi;
  constexpr double two_pi = 2.0 * std::numbers::pi;
  if (angle >= -pi && angle < pi) return angle;
  double w = std::fmod(angle + pi, two_pi);
  if (w < 0.0) w += two_pi;
  w -= pi;
  // fmod rounding can land exactly on +pi.
  return w >= pi ? -pi : w;
}

AgvState step(const AgvState& s, double u, const AgvConfig& cfg, StepDiagnostics* diag) {
  if (!std::isfinite(s.x1) || !std::isfinite(s.x2) || !std::isfinite(s.phi) || !std::isfinite(u)) {
    throw std::invalid_argument("agv::step: non-finite state or control");
  }
  if (std::abs(u) > cfg.u_bound) {
    u = std::clamp(u, -cfg.u_bound, cfg.u_bound);
    if (diag) ++diag->clamped_controls;
  }
  const DriftAndInput fg = analytic_fg(s, cfg);
  const Eigen::Vector3d next = s.vec() + cfg.dt * (fg.f + fg.g * u);
  const double b = cfg.position_bound;
  return {std::clamp(next(0), -b, b), std::clamp(next(1), -b, b), wrap_angle(next(2))};
}

double safety_value(const AgvState& s, const AgvConfig& cfg) {
  return std::hypot(s.x1 - cfg.obstacle_center[0], s.x2 - cfg.obstacle_center[1]) - cfg.obstacle_radius;
}

double reward(const AgvState& s, const AgvConfig& cfg) {
  return cfg.reward_scale / (std::hypot(s.x1 - cfg.goal[0], s.x2 - cfg.goal[1]) + cfg.reward_eps);
}

DriftAndInput analytic_fg(const AgvState& s, const AgvConfig& cfg) {
  DriftAndInput out;
  out.f = {cfg.v * std::cos(s.phi), cfg.v * std::sin(s.phi), 0.0};
  out.g = {0.0, 0.0, 1.0};
  return out;
}

AgvState sample_state(Rng& rng, const AgvConfig& cfg) {
  AgvState s;
  s.x1 = uniform(rng, -cfg.position_bound, cfg.position_bound);
  s.x2 = uniform(rng, -cfg.position_bound, cfg.position_bound);
  s.phi = uniform(rng, -std::numbers::pi, std::numbers::pi);
  return s;
}

data::TransitionSet generate_dataset(std::size_t n_transitions, const AgvConfig& cfg, std::uint64_t seed) {
  validate(cfg);
  if (n_transitions < 1) throw std::invalid_argument("generate_dataset: n_transitions must be >= 1");

  data::TransitionSet set;
  set.state_dim = kStateDim;
  set.control_dim = kControlDim;
  set.metadata = {"agv_dubins", cfg.dt, seed};
  set.transitions.reserve(n_transitions);

  const auto horizon = static_cast<std::size_t>(cfg.horizon);
  const std::size_t episodes = (n_transitions + horizon - 1) / horizon;
  for (std::size_t e = 0; e < episodes; ++e) {
    Rng rng(derive_seed(seed, e));
    AgvState s = sample_state(rng, cfg);
    const std::size_t steps = std::min(horizon, n_transitions - e * horizon);
    for (std::size_t t = 0; t < steps; ++t) {
      const double u = uniform(rng, -cfg.u_bound, cfg.u_bound);
      const AgvState next = step(s, u, cfg);
      data::Transition tr;
      tr.x = {s.x1, s.x2, s.phi};
      tr.u = {u};
      tr.x_next = {next.x1, next.x2, next.phi};
      tr.episode_id = static_cast<std::int64_t>(e);
      tr.step_id = static_cast<std::int64_t>(t);
      tr.ell_x = safety_value(s, cfg);
      tr.ell_x_next = safety_value(next, cfg);
      set.transitions.push_back(std::move(tr));
      s = next;
    }
  }
  return set;
}

data::SafetyFn safety_fn(const AgvConfig& cfg) {
  return [cfg](const std::vector<double>& x) { return safety_value({x.at(0), x.at(1), x.at(2)}, cfg); };
}

}  // namespace vocbf::agv
