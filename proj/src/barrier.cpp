#include "vocbf/barrier.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <stdexcept>
#include <string>

#include "vocbf/io.hpp"
#include "vocbf/rng.hpp"

namespace vocbf::barrier {

void BarrierTrainConfig::validate() const {
  if (!(gamma > 0.0 && gamma < 1.0)) throw std::invalid_argument("gamma must lie in (0, 1)");
  if (!(tau > 0.0 && tau < 1.0)) throw std::invalid_argument("tau must lie in (0, 1)");
  if (!(lr > 0.0)) throw std::invalid_argument("learning rate must be positive");
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (epochs < 0) throw std::invalid_argument("epochs must be >= 0");
  if (!(target_polyak_rho >= 0.0 && target_polyak_rho <= 1.0)) {
    throw std::invalid_argument("target_polyak_rho must lie in [0, 1]");
  }
  nn::validate(barrier_spec);
  if (barrier_spec.output_dim() != 1) throw std::invalid_argument("barrier network must have a scalar output");
}

double bd_target(double ell_x, double b_next, double gamma) {
  return (1.0 - gamma) * ell_x + gamma * std::min(ell_x, b_next);
}

Eigen::RowVectorXd bd_targets(const Eigen::RowVectorXd& ell_x, const Eigen::RowVectorXd& b_next, double gamma) {
  return (1.0 - gamma) * ell_x.array() + gamma * ell_x.array().min(b_next.array());
}

namespace {

constexpr std::uint64_t kSamplingStream = 1;
constexpr std::uint64_t kActionStream = 2;

void check_data(const data::TransitionSet& data, const BarrierTrainConfig& cfg) {
  data.validate();
  cfg.validate();
  if (feature_dim(cfg.features, data.state_dim) != cfg.barrier_spec.input_dim()) {
    throw std::invalid_argument("barrier input width does not match the feature encoding");
  }
}

std::size_t batches_per_epoch(const data::TransitionSet& data, const BarrierTrainConfig& cfg) {
  return (data.size() + cfg.batch_size - 1) / cfg.batch_size;
}

Eigen::RowVectorXd gather_ell(const data::TransitionSet& data, const std::vector<std::size_t>& idx) {
  Eigen::RowVectorXd ell(static_cast<Eigen::Index>(idx.size()));
  for (std::size_t i = 0; i < idx.size(); ++i) ell(static_cast<Eigen::Index>(i)) = data.transitions[idx[i]].ell_x;
  return ell;
}

void require_finite(double loss, const char* what, int epoch, std::uint64_t batch) {
  if (!std::isfinite(loss)) {
    throw TrainingError(std::string("non-finite ") + what + " loss at epoch " + std::to_string(epoch) +
                        ", minibatch " + std::to_string(batch));
  }
}

void apply_adam(nn::MlpModel& model, const nn::Params& grads, double lr, const char* what) {
  if (!nn::adam_step(model, grads, lr)) {
    throw TrainingError(std::string("non-finite gradient in ") + what + " update");
  }
}

// One TD step on psi. Returns the minibatch loss.
double td_update(nn::MlpModel& psi, nn::MlpModel* target, const Eigen::MatrixXd& features_x,
                 const Eigen::MatrixXd& features_next, const Eigen::RowVectorXd& ell, const BarrierTrainConfig& cfg) {
  const nn::MlpModel& bootstrap = target ? *target : psi;
  const Eigen::RowVectorXd b_next = nn::forward_batch(bootstrap, features_next).row(0);
  nn::SquaredError loss{bd_targets(ell, b_next, cfg.gamma)};
  nn::LossAndGrad lg = nn::value_and_param_grad(psi, features_x, loss);
  apply_adam(psi, lg.grads, cfg.lr, "psi");
  if (target) nn::polyak_update(*target, psi, cfg.target_polyak_rho);
  return lg.loss;
}

double expectile_update(nn::MlpModel& theta, const Eigen::MatrixXd& features_x, const Eigen::RowVectorXd& targets,
                        const BarrierTrainConfig& cfg) {
  nn::ExpectileError loss{targets, cfg.tau};
  nn::LossAndGrad lg = nn::value_and_param_grad(theta, features_x, loss);
  apply_adam(theta, lg.grads, cfg.lr, "theta");
  return lg.loss;
}

}  // namespace

nn::MlpModel train_td_barrier(const data::TransitionSet& data, const BarrierTrainConfig& cfg,
                              std::vector<EpochLoss>* log, TrainingStats* stats) {
  check_data(data, cfg);
  nn::MlpModel psi = nn::mlp_init(cfg.barrier_spec);
  nn::MlpModel target = psi;
  Rng rng(derive_seed(cfg.seed, kSamplingStream));
  const std::size_t per_epoch = batches_per_epoch(data, cfg);
  TrainingStats local;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    double sum = 0.0;
    for (std::size_t b = 0; b < per_epoch; ++b) {
      auto idx = data::sample_minibatch_indices(data, cfg.batch_size, rng);
      const Eigen::MatrixXd fx = encode(cfg.features, data::gather(data, idx, data::Field::State));
      const Eigen::MatrixXd fn = encode(cfg.features, data::gather(data, idx, data::Field::NextState));
      const double loss = td_update(psi, cfg.use_target_net ? &target : nullptr, fx, fn, gather_ell(data, idx), cfg);
      require_finite(loss, "psi", epoch, local.minibatches);
      sum += loss;
      ++local.minibatches;
    }
    if (log) log->push_back({epoch, sum / static_cast<double>(per_epoch), 0.0});
  }
  if (stats) *stats = local;
  return psi;
}

BarrierModelPair train_vocbf(const data::TransitionSet& data, const BarrierTrainConfig& cfg) {
  check_data(data, cfg);
  BarrierModelPair out;
  out.psi = nn::mlp_init(cfg.barrier_spec);
  out.theta = nn::mlp_init(cfg.barrier_spec);
  nn::MlpModel target = out.psi;
  Rng rng(derive_seed(cfg.seed, kSamplingStream));
  const std::size_t per_epoch = batches_per_epoch(data, cfg);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    double sum_psi = 0.0;
    double sum_theta = 0.0;
    for (std::size_t b = 0; b < per_epoch; ++b) {
      auto idx = data::sample_minibatch_indices(data, cfg.batch_size, rng);
      const Eigen::MatrixXd fx = encode(cfg.features, data::gather(data, idx, data::Field::State));
      const Eigen::MatrixXd fn = encode(cfg.features, data::gather(data, idx, data::Field::NextState));
      const Eigen::RowVectorXd ell = gather_ell(data, idx);

      // (A) TD update of psi.
      const double lp = td_update(out.psi, cfg.use_target_net ? &target : nullptr, fx, fn, ell, cfg);
      require_finite(lp, "psi", epoch, out.stats.minibatches);

      // (B) per-transition targets from the logged successor; psi is frozen here.
      Eigen::RowVectorXd targets = cfg.theta_on_psi
                                       ? Eigen::RowVectorXd(nn::forward_batch(out.psi, fx).row(0))
                                       : bd_targets(ell, nn::forward_batch(out.psi, fn).row(0), cfg.gamma);

      // (C) expectile update of theta.
      const double lt = expectile_update(out.theta, fx, targets, cfg);
      require_finite(lt, "theta", epoch, out.stats.minibatches);

      sum_psi += lp;
      sum_theta += lt;
      ++out.stats.minibatches;
    }
    out.training_log.push_back(
        {epoch, sum_psi / static_cast<double>(per_epoch), sum_theta / static_cast<double>(per_epoch)});
  }
  return out;
}

nn::MlpModel train_theta_fixed_psi(const data::TransitionSet& data, const nn::MlpModel& psi,
                                   const BarrierTrainConfig& cfg, std::vector<EpochLoss>* log, TrainingStats* stats) {
  check_data(data, cfg);
  if (!(psi.spec.layer_widths == cfg.barrier_spec.layer_widths)) {
    throw std::invalid_argument("psi architecture does not match barrier_spec");
  }
  // Targets depend only on the frozen psi, so they are computed once.
  const Eigen::MatrixXd fx_all = encode(cfg.features, data::gather_all(data, data::Field::State));
  Eigen::RowVectorXd all_targets;
  if (cfg.theta_on_psi) {
    all_targets = nn::forward_batch(psi, fx_all).row(0);
  } else {
    Eigen::RowVectorXd ell(static_cast<Eigen::Index>(data.size()));
    for (std::size_t i = 0; i < data.size(); ++i) ell(static_cast<Eigen::Index>(i)) = data.transitions[i].ell_x;
    const Eigen::MatrixXd fn_all = encode(cfg.features, data::gather_all(data, data::Field::NextState));
    all_targets = bd_targets(ell, nn::forward_batch(psi, fn_all).row(0), cfg.gamma);
  }

  nn::MlpModel theta = nn::mlp_init(cfg.barrier_spec);
  Rng rng(derive_seed(cfg.seed, kSamplingStream));
  const std::size_t per_epoch = batches_per_epoch(data, cfg);
  TrainingStats local;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    double sum = 0.0;
    for (std::size_t b = 0; b < per_epoch; ++b) {
      auto idx = data::sample_minibatch_indices(data, cfg.batch_size, rng);
      Eigen::MatrixXd fx(fx_all.rows(), static_cast<Eigen::Index>(idx.size()));
      Eigen::RowVectorXd targets(static_cast<Eigen::Index>(idx.size()));
      for (std::size_t i = 0; i < idx.size(); ++i) {
        fx.col(static_cast<Eigen::Index>(i)) = fx_all.col(static_cast<Eigen::Index>(idx[i]));
        targets(static_cast<Eigen::Index>(i)) = all_targets(static_cast<Eigen::Index>(idx[i]));
      }
      const double lt = expectile_update(theta, fx, targets, cfg);
      require_finite(lt, "theta", epoch, local.minibatches);
      sum += lt;
      ++local.minibatches;
    }
    if (log) log->push_back({epoch, 0.0, sum / static_cast<double>(per_epoch)});
  }
  if (stats) *stats = local;
  return theta;
}

Eigen::RowVectorXd max_successor_value(const nn::MlpModel& net, FeatureMap features, const Eigen::MatrixXd& states,
                                       const std::vector<Eigen::MatrixXd>& candidate_controls,
                                       const SuccessorFn& successor) {
  if (candidate_controls.empty()) throw std::invalid_argument("need at least one candidate control");
  const Eigen::Index n = states.cols();
  const auto k = static_cast<Eigen::Index>(candidate_controls.size());
  const Eigen::Index m = candidate_controls.front().rows();

  // Stack all candidates so the network runs once on n*k successors.
  Eigen::MatrixXd tiled_states(states.rows(), n * k);
  Eigen::MatrixXd tiled_controls(m, n * k);
  for (Eigen::Index j = 0; j < k; ++j) {
    tiled_states.middleCols(j * n, n) = states;
    tiled_controls.middleCols(j * n, n) = candidate_controls[static_cast<std::size_t>(j)];
  }
  const Eigen::MatrixXd next = successor(tiled_states, tiled_controls);
  const Eigen::RowVectorXd values = nn::forward_batch(net, encode(features, next)).row(0);

  Eigen::RowVectorXd best = values.head(n);
  for (Eigen::Index j = 1; j < k; ++j) best = best.cwiseMax(values.segment(j * n, n));
  return best;
}

nn::MlpModel train_cbvf_model_based(const data::TransitionSet& data, const SuccessorFn& successor,
                                    const BarrierTrainConfig& cfg, const ModelBasedConfig& mb,
                                    std::vector<EpochLoss>* log, TrainingStats* stats) {
  check_data(data, cfg);
  if (mb.n_action_samples < 1) throw std::invalid_argument("n_action_samples must be >= 1");
  if (mb.source == ActionSource::Logged && mb.n_action_samples != 1) {
    throw std::invalid_argument("logged-action source requires n_action_samples = 1");
  }
  if (!(mb.u_lo < mb.u_hi)) throw std::invalid_argument("empty control box");

  nn::MlpModel theta = nn::mlp_init(cfg.barrier_spec);
  nn::MlpModel target = theta;
  Rng rng(derive_seed(cfg.seed, kSamplingStream));
  Rng action_rng(derive_seed(cfg.seed, kActionStream));
  const std::size_t per_epoch = batches_per_epoch(data, cfg);
  TrainingStats local;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    double sum = 0.0;
    for (std::size_t b = 0; b < per_epoch; ++b) {
      auto idx = data::sample_minibatch_indices(data, cfg.batch_size, rng);
      const Eigen::MatrixXd x = data::gather(data, idx, data::Field::State);
      const Eigen::MatrixXd fx = encode(cfg.features, x);

      std::vector<Eigen::MatrixXd> candidates;
      if (mb.source == ActionSource::Logged) {
        candidates.push_back(data::gather(data, idx, data::Field::Control));
      } else {
        for (int k = 0; k < mb.n_action_samples; ++k) {
          Eigen::MatrixXd u(data.control_dim, x.cols());
          for (Eigen::Index c = 0; c < u.cols(); ++c) {
            for (Eigen::Index r = 0; r < u.rows(); ++r) u(r, c) = uniform(action_rng, mb.u_lo, mb.u_hi);
          }
          candidates.push_back(std::move(u));
          local.sampled_actions += static_cast<std::uint64_t>(x.cols());
        }
      }
      const nn::MlpModel& bootstrap = cfg.use_target_net ? target : theta;
      const Eigen::RowVectorXd best = max_successor_value(bootstrap, cfg.features, x, candidates, successor);
      nn::SquaredError loss{bd_targets(gather_ell(data, idx), best, cfg.gamma)};
      nn::LossAndGrad lg = nn::value_and_param_grad(theta, fx, loss);
      require_finite(lg.loss, "model-based theta", epoch, local.minibatches);
      apply_adam(theta, lg.grads, cfg.lr, "model-based theta");
      if (cfg.use_target_net) nn::polyak_update(target, theta, cfg.target_polyak_rho);
      sum += lg.loss;
      ++local.minibatches;
    }
    if (log) log->push_back({epoch, 0.0, sum / static_cast<double>(per_epoch)});
  }
  if (stats) *stats = local;
  return theta;
}

Eigen::RowVectorXd BarrierFunction::values(const Eigen::Ref<const Eigen::MatrixXd>& states) const {
  return nn::forward_batch(net, encode(features, states)).row(0);
}

nn::ValuesAndInputGrads BarrierFunction::values_and_grads(const Eigen::Ref<const Eigen::MatrixXd>& states) const {
  nn::ValuesAndInputGrads vg = nn::input_grad_batch(net, encode(features, states));
  vg.grads = pullback_gradient(features, states, vg.grads);
  return vg;
}

void write_training_curve(std::ostream& out, const std::vector<EpochLoss>& log) {
  out << "epoch,loss_psi,loss_theta\n";
  for (const auto& e : log) {
    out << e.epoch << ',' << format_double(e.loss_psi) << ',' << format_double(e.loss_theta) << '\n';
  }
}

}  // namespace vocbf::barrier
