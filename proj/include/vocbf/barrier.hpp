#pragma once

// Offline barrier learning.
//
// psi (TD barrier) regresses onto the discounted finite-difference backup
//     T(x, x') = (1 - gamma) l(x) + gamma min{l(x), B_psi(x')}
// using only the logged successor. theta (V-OCBF) is fitted to the same
// per-transition targets with an expectile loss, so tau > 0.5 tracks the
// upper envelope of outcomes supported by logged actions. Neither update
// samples actions; TrainingStats::sampled_actions stays zero for both.
//
// train_cbvf_model_based is the comparison baseline that instead maximises
// over sampled actions through a dynamics model.

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <vector>

#include <Eigen/Dense>

#include "vocbf/dataset.hpp"
#include "vocbf/features.hpp"
#include "vocbf/nn.hpp"

namespace vocbf::barrier {

struct BarrierTrainConfig {
  double gamma = 0.99;
  double tau = 0.99;
  double lr = 3e-5;
  std::size_t batch_size = 256;
  int epochs = 100;
  double target_polyak_rho = 0.005;
  bool use_target_net = true;
  // Regress theta onto B_psi(x) instead of the per-transition target.
  bool theta_on_psi = false;
  nn::MlpSpec barrier_spec{{4, 256, 256, 1}, nn::Activation::ReLU, 0};
  FeatureMap features = FeatureMap::AgvHeading;
  std::uint64_t seed = 0;  // minibatch sampling stream

  void validate() const;
};

struct EpochLoss {
  int epoch = 0;
  double loss_psi = 0.0;
  double loss_theta = 0.0;
};

struct TrainingStats {
  std::uint64_t minibatches = 0;
  std::uint64_t sampled_actions = 0;
};

struct BarrierModelPair {
  nn::MlpModel psi;
  nn::MlpModel theta;
  std::vector<EpochLoss> training_log;
  TrainingStats stats;
};

/// (1 - gamma) * ell_x + gamma * min(ell_x, b_next).
double bd_target(double ell_x, double b_next, double gamma);

/// Element-wise bd_target over a batch.
Eigen::RowVectorXd bd_targets(const Eigen::RowVectorXd& ell_x, const Eigen::RowVectorXd& b_next, double gamma);

nn::MlpModel train_td_barrier(const data::TransitionSet& data, const BarrierTrainConfig& cfg,
                              std::vector<EpochLoss>* log = nullptr, TrainingStats* stats = nullptr);

BarrierModelPair train_vocbf(const data::TransitionSet& data, const BarrierTrainConfig& cfg);

/// Retrains theta from scratch against a frozen psi (tau ablation).
nn::MlpModel train_theta_fixed_psi(const data::TransitionSet& data, const nn::MlpModel& psi,
                                   const BarrierTrainConfig& cfg, std::vector<EpochLoss>* log = nullptr,
                                   TrainingStats* stats = nullptr);

/// Batched successor model: (states n x k, controls m x k) -> next states n x k.
using SuccessorFn = std::function<Eigen::MatrixXd(const Eigen::MatrixXd& states, const Eigen::MatrixXd& controls)>;

enum class ActionSource { UniformBox, Logged };

struct ModelBasedConfig {
  int n_action_samples = 16;
  ActionSource source = ActionSource::UniformBox;
  double u_lo = -1.0;
  double u_hi = 1.0;
};

/// max_k over candidate controls of B(successor(x, u_k)), one value per column.
Eigen::RowVectorXd max_successor_value(const nn::MlpModel& net, FeatureMap features, const Eigen::MatrixXd& states,
                                       const std::vector<Eigen::MatrixXd>& candidate_controls,
                                       const SuccessorFn& successor);

nn::MlpModel train_cbvf_model_based(const data::TransitionSet& data, const SuccessorFn& successor,
                                    const BarrierTrainConfig& cfg, const ModelBasedConfig& mb,
                                    std::vector<EpochLoss>* log = nullptr, TrainingStats* stats = nullptr);

/// A trained barrier network together with its input encoding.
struct BarrierFunction {
  nn::MlpModel net;
  FeatureMap features = FeatureMap::AgvHeading;

  Eigen::RowVectorXd values(const Eigen::Ref<const Eigen::MatrixXd>& states) const;
  /// Values and raw-state gradients (chain-ruled through the encoding).
  nn::ValuesAndInputGrads values_and_grads(const Eigen::Ref<const Eigen::MatrixXd>& states) const;
};

/// `epoch,loss_psi,loss_theta` rows.
void write_training_curve(std::ostream& out, const std::vector<EpochLoss>& log);

}  // namespace vocbf::barrier
