#pragma once

// Dubins-car collision-avoidance environment: a vehicle moving at constant
// speed in [-1, 1]^2 steers around a circular obstacle at the origin.

#include <array>
#include <cstdint>

#include <Eigen/Dense>

#include "vocbf/dataset.hpp"

namespace vocbf::agv {

inline constexpr int kStateDim = 3;
inline constexpr int kControlDim = 1;

struct AgvState {
  double x1 = 0.0;
  double x2 = 0.0;
  double phi = 0.0;  // heading, radians, in [-pi, pi)

  Eigen::Vector3d vec() const { return {x1, x2, phi}; }
  static AgvState from(const Eigen::Ref<const Eigen::VectorXd>& x) { return {x(0), x(1), x(2)}; }
};

struct AgvConfig {
  double v = 0.6;
  double dt = 0.01;
  double u_bound = 1.0;
  std::array<double, 2> obstacle_center{0.0, 0.0};
  double obstacle_radius = 0.2;
  std::array<double, 2> goal{0.7, 0.7};
  double reward_scale = 0.1;
  double reward_eps = 0.1;
  int horizon = 500;
  double position_bound = 1.0;
};

/// Throws std::invalid_argument on a non-physical configuration.
void validate(const AgvConfig& cfg);

/// Maps any angle to [-pi, pi).
double wrap_angle(double angle);

/// Counts controls that had to be clamped into [-u_bound, u_bound].
struct StepDiagnostics {
  std::uint64_t clamped_controls = 0;
};

/// Forward-Euler Dubins step. Positions clamp at the boundary, heading wraps.
/// Throws std::invalid_argument on non-finite input.
AgvState step(const AgvState& s, double u, const AgvConfig& cfg, StepDiagnostics* diag = nullptr);

/// l(x): distance to the obstacle centre minus its radius.
double safety_value(const AgvState& s, const AgvConfig& cfg);

/// C / (||p - goal|| + eps).
double reward(const AgvState& s, const AgvConfig& cfg);

struct DriftAndInput {
  Eigen::Vector3d f;
  Eigen::Matrix<double, 3, 1> g;
};

/// Exact control-affine form: f = (v cos phi, v sin phi, 0), g = (0, 0, 1).
DriftAndInput analytic_fg(const AgvState& s, const AgvConfig& cfg);

AgvState sample_state(Rng& rng, const AgvConfig& cfg);

/// Random-control episodes from uniform initial states. Episodes run the
/// full horizon through collisions; the last episode is truncated so the
/// set holds exactly n_transitions. Episode e uses derive_seed(seed, e).
data::TransitionSet generate_dataset(std::size_t n_transitions, const AgvConfig& cfg, std::uint64_t seed);

/// Safety function over raw state vectors, for dataset annotation.
data::SafetyFn safety_fn(const AgvConfig& cfg);

}  // namespace vocbf::agv
