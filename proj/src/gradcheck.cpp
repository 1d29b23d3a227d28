#include "vocbf/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

namespace vocbf::nn {

namespace {

// Sign pattern of every hidden pre-activation over the batch.
std::vector<bool> relu_pattern(const MlpModel& model, const Eigen::MatrixXd& inputs) {
  Tape tape = forward_tape(model, inputs);
  std::vector<bool> pattern;
  for (std::size_t l = 1; l + 1 < tape.activations.size(); ++l) {
    const Eigen::MatrixXd& a = tape.activations[l];
    for (Eigen::Index i = 0; i < a.size(); ++i) pattern.push_back(a.data()[i] > 0.0);
  }
  return pattern;
}

// Central difference of f at `value`. When the probes straddle a ReLU kink
// the step is shrunk until both sides see the same activation pattern.
double central_difference(double& value, double step, const std::function<double()>& f,
                          const std::function<std::vector<bool>()>& pattern) {
  const double saved = value;
  double h = step;
  double numeric = 0.0;
  for (int attempt = 0; attempt < 4; ++attempt, h *= 0.1) {
    value = saved + h;
    const double up = f();
    const auto p_up = pattern();
    value = saved - h;
    const double down = f();
    const auto p_down = pattern();
    value = saved;
    numeric = (up - down) / (2.0 * h);
    if (p_up == p_down) break;
  }
  value = saved;
  return numeric;
}

}  // namespace

double relative_error(double analytic, double numeric, double floor) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

GradReport check_param_grad(const MlpModel& model, const Eigen::MatrixXd& inputs, const LossSpec& loss,
                            const GradCheckOptions& options) {
  const LossAndGrad analytic = value_and_param_grad(model, inputs, loss);
  MlpModel probe = model;
  GradReport report;
  for (std::size_t i = 0; i < probe.params.size(); ++i) {
    const double numeric = central_difference(
        probe.params.flat(i), options.step, [&] { return loss_value(probe, inputs, loss); },
        [&] { return relu_pattern(probe, inputs); });
    const double err = relative_error(analytic.grads.flat(i), numeric, options.denominator_floor);
    if (i == 0 || err > report.max_relative_error) {
      report.max_relative_error = err;
      report.worst_parameter_index = probe.params.index_of(i).to_string();
    }
  }
  report.passed = report.max_relative_error <= options.tolerance;
  return report;
}

GradReport check_input_grad(const MlpModel& model, const Eigen::VectorXd& input, const GradCheckOptions& options) {
  const Eigen::VectorXd analytic = input_grad(model, input);
  GradReport report;
  Eigen::MatrixXd probe = input;
  for (Eigen::Index i = 0; i < input.size(); ++i) {
    const double numeric = central_difference(
        probe(i, 0), options.step, [&] { return forward_batch(model, probe)(0, 0); },
        [&] { return relu_pattern(model, probe); });
    const double err = relative_error(analytic(i), numeric, options.denominator_floor);
    if (i == 0 || err > report.max_relative_error) {
      report.max_relative_error = err;
      report.worst_parameter_index = "x[" + std::to_string(i) + "]";
    }
  }
  report.passed = report.max_relative_error <= options.tolerance;
  return report;
}

}  // namespace vocbf::nn
