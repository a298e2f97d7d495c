#pragma once

#include <string>

#include "hmfg/problem.hpp"

namespace hmfg {

/// b = a, sigma = s_l, G = 0 and
/// F = -a^2/2 - kappa_l (1/K) sum_j (phi_h * mu_j)(x) - (c_l/2)(x - target_l)^2
/// with phi_h the Gaussian kernel of bandwidth h; actions clamped to [-action_bound, action_bound].
struct CongestionModel {
  Vector vol;
  Vector strength;
  Vector cost;
  Vector target;
  Vector init_mean;
  Vector init_std;
  double bandwidth = 0.5;
  double horizon = 0.5;
  double action_bound = 10.0;
  double lipschitz = 25.0;
  std::string name = "congestion";

  Index n_types() const { return vol.size(); }
  void validate() const;
};

HMFGProblem make_problem(const CongestionModel& model);

}  // namespace hmfg
