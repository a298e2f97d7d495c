#pragma once

#include <optional>
#include <vector>

#include "hmfg/problem.hpp"
#include "hmfg/value_field.hpp"

namespace hmfg {

struct HjbOptions {
  /// Replaces G(theta, ., rho_T) as terminal data when set.
  const Vector* terminal = nullptr;
  /// Receives the observed |sigma * du/dx| when set.
  TruncationGuard* guard = nullptr;
};

/// Backward semi-implicit solve of u_t + sigma^2/2 u_xx + H(theta, t, x, u_x, rho_t) = 0 with u(T) = G and
/// homogeneous Neumann boundaries. Diffusion is implicit; H is explicit at the previous gradient, upwinded in
/// the direction of dpH once the cell Peclet number exceeds 2.
ValueField solve_hjb(const HMFGProblem& problem, double theta, const EnsembleFlow& rho_bar, const SolverGrids& grids,
                     const HjbOptions& options = {});

struct DensityFlow {
  RowMatrix density;  // n_times x n_x
  double max_renormalization = 0.0;
  Index clipped_steps = 0;
};

/// Forward implicit finite-volume solve of rho_t + (dpH rho)_x - (sigma^2 rho / 2)_xx = 0 with zero-flux
/// boundaries. Mass is conserved in the trapezoidal sense at every step.
DensityFlow solve_fp(const HMFGProblem& problem, double theta, const ValueField& value, const EnsembleFlow& rho_bar,
                     const GridMeasure& mu0, const SolverGrids& grids);

struct BestResponseOptions {
  int workers = 1;
  double guard_bound = 50.0;
  /// Per-type terminal data overriding G when non-empty.
  std::vector<Vector> terminal;
};

struct BestResponse {
  EnsembleFlow flow;
  std::vector<ValueField> values;
  TruncationGuard guard;
  double max_renormalization = 0.0;
};

/// The best-response map: per type, solve_hjb against rho_bar, then solve_fp from mu0.
BestResponse best_response_flow(const HMFGProblem& problem, const EnsembleFlow& rho_bar, const MeasureEnsemble& mu0,
                                const SolverGrids& grids, const BestResponseOptions& options = {});

/// Throws ValidationError unless the flow lives on the solver grids.
void check_alignment(const EnsembleFlow& flow, const SolverGrids& grids);

}  // namespace hmfg
