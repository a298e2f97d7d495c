#pragma once

#include <Eigen/Core>

namespace hmfg {

/// Nodes and weights of an n-point Gauss rule.
struct QuadratureRule {
  Eigen::VectorXd nodes;
  Eigen::VectorXd weights;
};

/// Gauss-Legendre rule on [-1, 1].
QuadratureRule gauss_legendre(Eigen::Index n);

/// Gauss-Hermite rule for the standard normal weight: sum_i w_i f(z_i) ~ E f(Z), Z ~ N(0, 1).
QuadratureRule gauss_hermite_normal(Eigen::Index n);

}  // namespace hmfg
