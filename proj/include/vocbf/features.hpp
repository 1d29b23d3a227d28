#pragma once

#include <string>

#include <Eigen/Dense>

namespace vocbf {

/// Network input encodings of raw states.
///   Identity:    e(x) = x
///   AgvHeading:  e(x1, x2, phi) = (x1, x2, sin phi, cos phi)
enum class FeatureMap { Identity, AgvHeading };

/// "identity" / "agv_heading"; parse throws std::invalid_argument otherwise.
std::string feature_map_name(FeatureMap map);
FeatureMap parse_feature_map(const std::string& name);

int feature_dim(FeatureMap map, int state_dim);

/// Encodes each column of `states`.
Eigen::MatrixXd encode(FeatureMap map, const Eigen::Ref<const Eigen::MatrixXd>& states);

/// Chain rule: maps per-column feature gradients back to raw-state gradients.
Eigen::MatrixXd pullback_gradient(FeatureMap map, const Eigen::Ref<const Eigen::MatrixXd>& states,
                                  const Eigen::Ref<const Eigen::MatrixXd>& feature_grads);

}  // namespace vocbf
