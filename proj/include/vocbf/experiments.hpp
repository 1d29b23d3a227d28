#pragma once

// Ablations assembled from trained artifacts.

#include <memory>
#include <vector>

#include "vocbf/barrier.hpp"
#include "vocbf/dynamics.hpp"
#include "vocbf/evaluation.hpp"
#include "vocbf/safety.hpp"

namespace vocbf::eval {

struct FilterSetup {
  agv::AgvConfig env;
  std::shared_ptr<const policy::Controller> reference;
  double alpha = 1.0;
};

std::shared_ptr<safety::SafePolicy> make_filter(const FilterSetup& setup, nn::MlpModel theta,
                                                FeatureMap features, safety::DynamicsProvider provider);

/// Unfiltered pi_ref row and the filtered row, on paired initial states.
ExperimentTable table1(const FilterSetup& setup, const safety::SafePolicy& filtered, const SuiteConfig& suite);

/// eval_suite at each sigma; the sigma = 0 row matches table1's filtered row.
ExperimentTable ablate_noise(const safety::SafePolicy& filtered, const std::vector<double>& sigmas,
                             const agv::AgvConfig& env, const SuiteConfig& suite);

/// Retrains theta from scratch per tau against the frozen psi, then
/// evaluates the filter built on it. `thetas` receives the models.
ExperimentTable ablate_tau(const data::TransitionSet& data, const nn::MlpModel& psi,
                           const barrier::BarrierTrainConfig& base, const std::vector<double>& taus,
                           const FilterSetup& setup, const safety::DynamicsProvider& provider,
                           const SuiteConfig& suite, std::vector<nn::MlpModel>* thetas = nullptr);

/// Rows: qp_learned_dynamics, qp_known_dynamics, cbvf_model_based (theta_mb
/// with the learned surrogate).
ExperimentTable compare_dynamics_modes(const FilterSetup& setup, const nn::MlpModel& theta,
                                       const nn::MlpModel& theta_mb, FeatureMap features,
                                       std::shared_ptr<const dyn::DynamicsSurrogate> surrogate,
                                       const SuiteConfig& suite);

}  // namespace vocbf::eval
