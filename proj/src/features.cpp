#include "vocbf/features.hpp"

#include <cmath>
#include <stdexcept>

namespace vocbf {

std::string feature_map_name(FeatureMap map) {
  return map == FeatureMap::Identity ? "identity" : "agv_heading";
}

FeatureMap parse_feature_map(const std::string& name) {
  if (name == "identity") return FeatureMap::Identity;
  if (name == "agv_heading") return FeatureMap::AgvHeading;
  throw std::invalid_argument("unknown feature map '" + name + "'");
}

int feature_dim(FeatureMap map, int state_dim) {
  switch (map) {
    case FeatureMap::Identity:
      return state_dim;
    case FeatureMap::AgvHeading:
      if (state_dim != 3) throw std::invalid_argument("AgvHeading features need a 3-dimensional state");
      return 4;
  }
  throw std::invalid_argument("unknown feature map");
}

Eigen::MatrixXd encode(FeatureMap map, const Eigen::Ref<const Eigen::MatrixXd>& states) {
  if (map == FeatureMap::Identity) return states;
  if (states.rows() != 3) throw std::invalid_argument("AgvHeading features need a 3-dimensional state");
  Eigen::MatrixXd f(4, states.cols());
  f.row(0) = states.row(0);
  f.row(1) = states.row(1);
  f.row(2) = states.row(2).array().sin();
  f.row(3) = states.row(2).array().cos();
  return f;
}

Eigen::MatrixXd pullback_gradient(FeatureMap map, const Eigen::Ref<const Eigen::MatrixXd>& states,
                                  const Eigen::Ref<const Eigen::MatrixXd>& feature_grads) {
  if (map == FeatureMap::Identity) return feature_grads;
  if (states.rows() != 3 || feature_grads.rows() != 4 || states.cols() != feature_grads.cols()) {
    throw std::invalid_argument("pullback_gradient: shape mismatch");
  }
  Eigen::MatrixXd g(3, states.cols());
  g.row(0) = feature_grads.row(0);
  g.row(1) = feature_grads.row(1);
  // d/dphi (sin phi, cos phi) = (cos phi, -sin phi)
  g.row(2) = feature_grads.row(2).array() * states.row(2).array().cos() -
             feature_grads.row(3).array() * states.row(2).array().sin();
  return g;
}

}  // namespace vocbf
