#pragma once

#include <functional>
#include <optional>
#include <vector>

#include "hmfg/hjb_fp.hpp"

namespace hmfg {

struct FixedPointConfig {
  double tol = 1e-6;
  int max_iter = 200;
  double damping = 0.5;
  bool split_horizon = false;
  std::optional<double> delta0_hint;
  double guard_bound = 50.0;
  int workers = 1;
  /// Target Picard ratio for adaptive windows.
  double window_ratio_target = 0.8;

  void validate() const;
};

struct SolveReport {
  std::vector<double> residuals;
  std::vector<double> contraction_ratios;
  bool converged = false;
  int iterations = 0;
  TruncationGuard guard;
  double wall_time = 0.0;
  /// d1(Phi(rho*), rho*) of the returned iterate.
  double certificate = 0.0;
  /// Largest mass of any type within the outer 5% of the domain on either side.
  double edge_mass = 0.0;
  double max_renormalization = 0.0;
  /// Largest finite-difference slope of the feedback over the grid.
  double feedback_lipschitz = 0.0;
  Index windows = 1;
};

struct EquilibriumSolution {
  HMFGProblem problem;
  SolverGrids grids;
  EnsembleFlow rho_star;
  std::vector<ValueField> values;
  SolveReport report;

  Index n_types() const { return rho_star.n_types(); }
  /// a*(theta_l, t, x, u_x(t, x), rho*_t) with u_x interpolated bilinearly.
  double feedback(Index l, double t, double x) const;
  std::function<double(double, double)> feedback_fn(Index l) const;
};

/// Damped Picard iteration rho <- (1 - lambda) rho + lambda Phi(rho) from the time-frozen initial law,
/// or from `initial` when given. Returns the best iterate when max_iter is reached.
EquilibriumSolution solve_equilibrium(const HMFGProblem& problem, const MeasureEnsemble& mu0, const SolverGrids& grids,
                                      const FixedPointConfig& config, const EnsembleFlow* initial = nullptr);

/// Forward-backward sweeps over time windows: each sweep computes continuation values against the current
/// flow, then solves a local fixed point on each window in forward order with that continuation as terminal data.
/// Window length comes from delta0_hint, or is halved until the window iterations contract.
EquilibriumSolution solve_split_horizon(const HMFGProblem& problem, const MeasureEnsemble& mu0,
                                        const SolverGrids& grids, const FixedPointConfig& config);

/// d1(Phi(rho1), Phi(rho2)) / d1(rho1, rho2), with the initial law taken from rho1.
double estimate_contraction(const HMFGProblem& problem, const EnsembleFlow& rho1, const EnsembleFlow& rho2,
                            const SolverGrids& grids, int workers = 1);

/// Largest mass within the outer fraction of the domain, over all types and times.
double edge_mass(const EnsembleFlow& flow, double fraction = 0.05);

}  // namespace hmfg
