#include "vocbf/experiments.hpp"

namespace vocbf::eval {

std::shared_ptr<safety::SafePolicy> make_filter(const FilterSetup& setup, nn::MlpModel theta, FeatureMap features,
                                                safety::DynamicsProvider provider) {
  auto barrier = std::make_shared<const barrier::BarrierFunction>(barrier::BarrierFunction{std::move(theta), features});
  return std::make_shared<safety::SafePolicy>(barrier, std::move(provider), setup.reference, setup.alpha,
                                              -setup.env.u_bound, setup.env.u_bound);
}

ExperimentTable table1(const FilterSetup& setup, const safety::SafePolicy& filtered, const SuiteConfig& suite) {
  ExperimentTable t;
  t.name = "table1";
  t.seeds = suite.seeds;
  t.episodes_per_seed = suite.episodes;
  t.rows.push_back(eval_suite("pi_ref", *setup.reference, setup.env, suite));
  t.rows.push_back(eval_suite("pi_ref+vocbf_qp", filtered, setup.env, suite));
  return t;
}

ExperimentTable ablate_noise(const safety::SafePolicy& filtered, const std::vector<double>& sigmas,
                             const agv::AgvConfig& env, const SuiteConfig& suite) {
  ExperimentTable t;
  t.name = "noise";
  t.param_name = "sigma";
  t.seeds = suite.seeds;
  t.episodes_per_seed = suite.episodes;
  for (double sigma : sigmas) {
    SuiteConfig s = suite;
    s.noise_sigma = sigma * env.u_bound;
    TableRow row = eval_suite("pi_ref+vocbf_qp", filtered, env, s);
    row.param = sigma;
    t.rows.push_back(std::move(row));
  }
  return t;
}

ExperimentTable ablate_tau(const data::TransitionSet& data, const nn::MlpModel& psi,
                           const barrier::BarrierTrainConfig& base, const std::vector<double>& taus,
                           const FilterSetup& setup, const safety::DynamicsProvider& provider,
                           const SuiteConfig& suite, std::vector<nn::MlpModel>* thetas) {
  ExperimentTable t;
  t.name = "tau";
  t.param_name = "tau";
  t.seeds = suite.seeds;
  t.episodes_per_seed = suite.episodes;
  for (double tau : taus) {
    barrier::BarrierTrainConfig cfg = base;
    cfg.tau = tau;
    nn::MlpModel theta = barrier::train_theta_fixed_psi(data, psi, cfg);
    if (thetas) thetas->push_back(theta);
    auto filter = make_filter(setup, std::move(theta), cfg.features, provider);
    TableRow row = eval_suite("pi_ref+vocbf_qp", *filter, setup.env, suite);
    row.param = tau;
    t.rows.push_back(std::move(row));
  }
  return t;
}

ExperimentTable compare_dynamics_modes(const FilterSetup& setup, const nn::MlpModel& theta,
                                       const nn::MlpModel& theta_mb, FeatureMap features,
                                       std::shared_ptr<const dyn::DynamicsSurrogate> surrogate,
                                       const SuiteConfig& suite) {
  ExperimentTable t;
  t.name = "dyncompare";
  t.seeds = suite.seeds;
  t.episodes_per_seed = suite.episodes;
  const auto learned = safety::DynamicsProvider::learned(surrogate);
  const auto known = safety::DynamicsProvider::analytic(setup.env);
  t.rows.push_back(eval_suite("qp_learned_dynamics", *make_filter(setup, theta, features, learned), setup.env, suite));
  t.rows.push_back(eval_suite("qp_known_dynamics", *make_filter(setup, theta, features, known), setup.env, suite));
  t.rows.push_back(eval_suite("cbvf_model_based", *make_filter(setup, theta_mb, features, learned), setup.env, suite));
  return t;
}

}  // namespace vocbf::eval
