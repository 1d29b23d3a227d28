#include "vocbf/policy.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "vocbf/agv.hpp"
#include "vocbf/io.hpp"
#include "vocbf/rng.hpp"

namespace vocbf::policy {

double goto_goal(double x1, double x2, double phi, const GoToGoal& params, double lo, double hi) {
  const double bearing = std::atan2(params.goal[1] - x2, params.goal[0] - x1);
  return std::clamp(params.gain * agv::wrap_angle(bearing - phi), lo, hi);
}

Eigen::MatrixXd squash(const Eigen::MatrixXd& raw, double lo, double hi) {
  const double mid = 0.5 * (lo + hi);
  const double half = 0.5 * (hi - lo);
  return (mid + half * raw.array().tanh()).matrix();
}

ReferencePolicy ReferencePolicy::goto_goal(const GoToGoal& params, double u_lo, double u_hi) {
  if (!(params.gain > 0.0)) throw std::invalid_argument("goto_goal gain must be positive");
  if (!(u_lo < u_hi)) throw std::invalid_argument("empty control box");
  ReferencePolicy p;
  p.kind_ = Kind::GoToGoal;
  p.gtg_ = params;
  p.u_lo_ = u_lo;
  p.u_hi_ = u_hi;
  return p;
}

ReferencePolicy ReferencePolicy::behavior_cloned(BehaviorCloned bc, double u_lo, double u_hi) {
  if (!(u_lo < u_hi)) throw std::invalid_argument("empty control box");
  ReferencePolicy p;
  p.kind_ = Kind::BehaviorCloned;
  p.bc_ = std::move(bc);
  p.u_lo_ = u_lo;
  p.u_hi_ = u_hi;
  return p;
}

int ReferencePolicy::control_dim() const {
  return kind_ == Kind::GoToGoal ? 1 : bc_.actor.spec.output_dim();
}

Eigen::MatrixXd ReferencePolicy::act(const Eigen::Ref<const Eigen::MatrixXd>& states, ActDiagnostics*) const {
  if (kind_ == Kind::GoToGoal) {
    if (states.rows() != 3) throw std::invalid_argument("goto_goal expects AGV states");
    Eigen::MatrixXd u(1, states.cols());
    for (Eigen::Index j = 0; j < states.cols(); ++j) {
      u(0, j) = policy::goto_goal(states(0, j), states(1, j), states(2, j), gtg_, u_lo_, u_hi_);
    }
    return u;
  }
  // The squash maps into the open box; the clamp only guards rounding.
  Eigen::MatrixXd u = squash(nn::forward_batch(bc_.actor, encode(bc_.features, states)), u_lo_, u_hi_);
  return u.cwiseMax(u_lo_).cwiseMin(u_hi_);
}

void BcTrainConfig::validate() const {
  if (hidden.empty()) throw std::invalid_argument("bc: need at least one hidden layer");
  if (!(lr > 0.0)) throw std::invalid_argument("bc: learning rate must be positive");
  if (batch_size < 1) throw std::invalid_argument("bc: batch_size must be >= 1");
  if (epochs < 0) throw std::invalid_argument("bc: epochs must be >= 0");
  if (!(u_lo < u_hi)) throw std::invalid_argument("bc: empty control box");
}

ReferencePolicy train_bc(const data::TransitionSet& data, const BcTrainConfig& cfg, std::vector<double>* epoch_loss) {
  data.validate();
  cfg.validate();
  std::vector<int> widths{feature_dim(cfg.features, data.state_dim)};
  widths.insert(widths.end(), cfg.hidden.begin(), cfg.hidden.end());
  widths.push_back(data.control_dim);
  BehaviorCloned bc{nn::mlp_init({widths, nn::Activation::ReLU, derive_seed(cfg.seed, 10)}), cfg.features};

  const double half = 0.5 * (cfg.u_hi - cfg.u_lo);
  const double mid = 0.5 * (cfg.u_hi + cfg.u_lo);
  Rng rng(derive_seed(cfg.seed, 1));
  const std::size_t per_epoch = (data.size() + cfg.batch_size - 1) / cfg.batch_size;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    double sum = 0.0;
    for (std::size_t b = 0; b < per_epoch; ++b) {
      const auto idx = data::sample_minibatch_indices(data, cfg.batch_size, rng);
      const Eigen::MatrixXd target = data::gather(data, idx, data::Field::Control);
      const Eigen::MatrixXd feats = encode(cfg.features, data::gather(data, idx, data::Field::State));
      nn::CustomLoss loss{[&](const Eigen::MatrixXd& raw, Eigen::MatrixXd& grad) {
        const Eigen::ArrayXXd t = raw.array().tanh();
        const Eigen::ArrayXXd r = (mid + half * t) - target.array();
        const double n = static_cast<double>(raw.cols());
        grad = ((2.0 / n) * r * half * (1.0 - t.square())).matrix();
        return r.square().sum() / n;
      }};
      nn::LossAndGrad lg = nn::value_and_param_grad(bc.actor, feats, loss);
      if (!std::isfinite(lg.loss)) throw TrainingError("non-finite BC loss at epoch " + std::to_string(epoch));
      if (!nn::adam_step(bc.actor, lg.grads, cfg.lr)) {
        throw TrainingError("non-finite BC gradient at epoch " + std::to_string(epoch));
      }
      sum += lg.loss;
    }
    if (epoch_loss) epoch_loss->push_back(sum / static_cast<double>(per_epoch));
  }
  return ReferencePolicy::behavior_cloned(std::move(bc), cfg.u_lo, cfg.u_hi);
}

}  // namespace vocbf::policy
