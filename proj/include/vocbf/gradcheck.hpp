#pragma once

// Central finite-difference verification of reverse-mode gradients. Only
// forward evaluations are used here, so the check is independent of the
// backpropagation code it verifies.

#include <string>

#include "vocbf/nn.hpp"

namespace vocbf::nn {

struct GradReport {
  double max_relative_error = 0.0;
  std::string worst_parameter_index;  // e.g. "W1[3,7]" or "x[2]"
  bool passed = false;
};

struct GradCheckOptions {
  double step = 1e-5;
  double tolerance = 1e-4;
  // Relative error is |a - n| / max(|a|, |n|, floor); the floor keeps
  // near-zero derivatives from dominating with pure rounding noise.
  double denominator_floor = 1e-6;
};

double relative_error(double analytic, double numeric, double floor);

GradReport check_param_grad(const MlpModel& model, const Eigen::MatrixXd& inputs, const LossSpec& loss,
                            const GradCheckOptions& options = {});

/// Gradient of the scalar network output with respect to one input point.
GradReport check_input_grad(const MlpModel& model, const Eigen::VectorXd& input, const GradCheckOptions& options = {});

}  // namespace vocbf::nn
