#pragma once

// Control-affine dynamics surrogate
//     x' = x + (f(x) + g(x) u) dt
// fitted to logged transitions. f and g are separate networks over the
// heading-encoded state; each network's output layer is its affine head.
// An optional state box (the simulator's position clamp) is applied to the
// prediction, so f and g only model the unconstrained field.

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "vocbf/dataset.hpp"
#include "vocbf/features.hpp"
#include "vocbf/nn.hpp"

namespace vocbf::dyn {

struct DynamicsSurrogate {
  nn::MlpModel f_net;  // encoded state -> n
  nn::MlpModel g_net;  // encoded state -> n*m, column-major reshape to n x m
  FeatureMap features = FeatureMap::AgvHeading;
  double dt = 0.01;
  int state_dim = 3;
  int control_dim = 1;
  // Per-dimension bounds on x'; +-inf where unbounded. Empty means no box.
  std::vector<double> state_lo;
  std::vector<double> state_hi;
};

struct FgBatch {
  Eigen::MatrixXd f;  // n x batch
  Eigen::MatrixXd g;  // (n*m) x batch, column-major blocks of g(x)
};

/// Zero output layers so the surrogate starts as the identity map.
DynamicsSurrogate make_surrogate(int state_dim, int control_dim, double dt, FeatureMap features,
                                 const std::vector<int>& hidden, std::uint64_t seed, bool zero_heads = false);

FgBatch eval_fg_batch(const DynamicsSurrogate& dyn, const Eigen::Ref<const Eigen::MatrixXd>& states);

/// f_hat (n) and g_hat (n x m) at one state.
void eval_fg(const DynamicsSurrogate& dyn, const Eigen::Ref<const Eigen::VectorXd>& x, Eigen::VectorXd& f,
             Eigen::MatrixXd& g);

Eigen::VectorXd predict_next(const DynamicsSurrogate& dyn, const Eigen::Ref<const Eigen::VectorXd>& x,
                             const Eigen::Ref<const Eigen::VectorXd>& u);
Eigen::MatrixXd predict_next_batch(const DynamicsSurrogate& dyn, const Eigen::Ref<const Eigen::MatrixXd>& states,
                                   const Eigen::Ref<const Eigen::MatrixXd>& controls);

/// Clamp columns of `states` into the surrogate's state box, in place.
void project_to_box(const DynamicsSurrogate& dyn, Eigen::Ref<Eigen::MatrixXd> states);

struct DynamicsTrainConfig {
  std::vector<int> hidden{64, 64, 64};
  double lr = 3e-5;
  std::size_t batch_size = 64;
  int epochs = 1200;
  double test_fraction = 0.1;
  // Residuals of these state coordinates are wrapped to [-pi, pi).
  std::vector<int> angle_dims{2};
  FeatureMap features = FeatureMap::AgvHeading;
  // Known state box of the system (empty for none). Clamped coordinates get no gradient.
  std::vector<double> state_lo;
  std::vector<double> state_hi;
  std::uint64_t seed = 0;

  void validate() const;
};

struct DynamicsTrainResult {
  DynamicsSurrogate model;
  std::vector<double> epoch_loss;
  Eigen::VectorXd heldout_rmse;  // per state dimension
  std::size_t train_transitions = 0;
  std::size_t test_transitions = 0;
};

/// Splits by episode, trains on the train part and reports held-out RMSE.
/// dt is taken from the dataset metadata.
DynamicsTrainResult train_dynamics(const data::TransitionSet& data, const DynamicsTrainConfig& cfg);

/// Per-dimension one-step RMSE, angle residuals wrapped.
Eigen::VectorXd one_step_rmse(const DynamicsSurrogate& dyn, const data::TransitionSet& data,
                              const std::vector<int>& angle_dims);

// Checkpoint: a line
//   `VOCBF-DYN v2 dt=<dt> state_dim=<n> control_dim=<m> features=<name> lo=<a,b,..> hi=<a,b,..>`
// (lo/hi are `none` without a box)
// followed by two VOCBF-MLP blocks with roles dynamics_f and dynamics_g.
void write_surrogate(std::ostream& out, const DynamicsSurrogate& dyn);
DynamicsSurrogate read_surrogate(std::istream& in);
void save_surrogate(const std::string& path, const DynamicsSurrogate& dyn);
DynamicsSurrogate load_surrogate(const std::string& path);

}  // namespace vocbf::dyn
