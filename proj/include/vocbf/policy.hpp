#pragma once

// Reference (nominal) controllers for the safety filter.

#include <array>
#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "vocbf/dataset.hpp"
#include "vocbf/features.hpp"
#include "vocbf/nn.hpp"

namespace vocbf::policy {

/// Per-column flags filled by filtering controllers; plain controllers
/// leave it untouched.
struct ActDiagnostics {
  std::vector<std::uint8_t> infeasible;
};

/// Batched state-feedback controller: states (n x k) -> controls (m x k).
class Controller {
 public:
  virtual ~Controller() = default;
  virtual Eigen::MatrixXd act(const Eigen::Ref<const Eigen::MatrixXd>& states,
                              ActDiagnostics* diag = nullptr) const = 0;
  virtual int control_dim() const = 0;
};

struct GoToGoal {
  double gain = 2.0;
  std::array<double, 2> goal{0.7, 0.7};
};

/// u = clamp(k * wrap(atan2(yg - x2, xg - x1) - phi), lo, hi).
double goto_goal(double x1, double x2, double phi, const GoToGoal& params, double lo = -1.0, double hi = 1.0);

struct BehaviorCloned {
  nn::MlpModel actor;
  FeatureMap features = FeatureMap::AgvHeading;
};

/// Either controller kind, always clamped to [u_lo, u_hi] per coordinate.
class ReferencePolicy : public Controller {
 public:
  static ReferencePolicy goto_goal(const GoToGoal& params, double u_lo = -1.0, double u_hi = 1.0);
  static ReferencePolicy behavior_cloned(BehaviorCloned bc, double u_lo = -1.0, double u_hi = 1.0);

  Eigen::MatrixXd act(const Eigen::Ref<const Eigen::MatrixXd>& states, ActDiagnostics* diag = nullptr) const override;
  int control_dim() const override;

  bool is_behavior_cloned() const { return kind_ == Kind::BehaviorCloned; }
  const BehaviorCloned& bc() const { return bc_; }
  double u_lo() const { return u_lo_; }
  double u_hi() const { return u_hi_; }

 private:
  enum class Kind { GoToGoal, BehaviorCloned };
  Kind kind_ = Kind::GoToGoal;
  GoToGoal gtg_;
  BehaviorCloned bc_;
  double u_lo_ = -1.0;
  double u_hi_ = 1.0;
};

/// Smooth bounded squash of a raw network output onto (lo, hi):
/// mid + half * tanh(z).
Eigen::MatrixXd squash(const Eigen::MatrixXd& raw, double lo, double hi);

struct BcTrainConfig {
  std::vector<int> hidden{128, 128};
  double lr = 3e-5;
  std::size_t batch_size = 256;
  int epochs = 100;
  double u_lo = -1.0;
  double u_hi = 1.0;
  FeatureMap features = FeatureMap::AgvHeading;
  std::uint64_t seed = 0;

  void validate() const;
};

/// MSE regression of the squashed actor output onto dataset actions.
ReferencePolicy train_bc(const data::TransitionSet& data, const BcTrainConfig& cfg,
                         std::vector<double>* epoch_loss = nullptr);

}  // namespace vocbf::policy
