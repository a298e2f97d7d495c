#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "hmfg/measure.hpp"

namespace hmfg {

/// Closed action interval [lo, hi]; infinite ends are allowed only with a closed-form Hamiltonian.
struct ActionBounds {
  double lo = -1.0;
  double hi = 1.0;
  bool finite() const;
};

/// Coefficients of a heterogeneous mean field game. All functions must be pure and safe to call concurrently.
struct HMFGProblem {
  using DriftFn = std::function<double(double theta, double t, double x, const MeasureEnsemble& mu, double a)>;
  using VolFn = std::function<double(double theta, double t, double x, const MeasureEnsemble& mu)>;
  using RunningCostFn = DriftFn;
  using TerminalCostFn = std::function<double(double theta, double x, const MeasureEnsemble& mu)>;
  using HamiltonianFn = std::function<double(double theta, double t, double x, double p, const MeasureEnsemble& mu)>;

  std::string name = "problem";
  DriftFn drift;
  VolFn vol;
  RunningCostFn running_cost;
  TerminalCostFn terminal_cost;
  HamiltonianFn hamiltonian;       // optional: falls back to the sup over the action grid
  HamiltonianFn hamiltonian_grad;  // optional: falls back to b(a*)
  HamiltonianFn feedback;          // optional: falls back to the sup argmax
  ActionBounds actions;
  double lipschitz = 1.0;
  double horizon = 1.0;
  /// Resolution of the action grid used when H is not supplied.
  Index action_grid = 41;
};

/// Value and maximizer of a -> b p + F over the action interval.
struct SupResult {
  double value;
  double argmax;
};

/// Grid search over n_a equispaced actions followed by golden-section refinement; ties go to the smallest action.
SupResult hamiltonian_from_sup(const HMFGProblem& problem, double p, double theta, double t, double x,
                               const MeasureEnsemble& mu, Index n_a);

/// H, dpH and a* with fallbacks applied.
struct HamiltonianTriple {
  HMFGProblem::HamiltonianFn hamiltonian;
  HMFGProblem::HamiltonianFn hamiltonian_grad;
  HMFGProblem::HamiltonianFn feedback;
};

/// Throws ConfigError when H is missing and the action interval is unbounded.
HamiltonianTriple resolve_hamiltonian(const HMFGProblem& problem);

/// Checks that every coefficient is set and the metadata is positive; throws ValidationError otherwise.
void check_problem(const HMFGProblem& problem);

/// Records the largest observed |sigma * du/dx| and whether it exceeded the bound M.
struct TruncationGuard {
  explicit TruncationGuard(double bound = 50.0);

  double bound;
  double max_observed = 0.0;
  bool violated = false;
  double theta = 0.0;
  double t = 0.0;
  double x = 0.0;

  void observe(double z, double theta_at, double t_at, double x_at);
  void merge(const TruncationGuard& other);
};

/// Worst sampled Lipschitz ratio of one coefficient.
struct LipschitzRatio {
  std::string coefficient;
  double ratio = 0.0;
  bool unbounded = false;
  double theta = 0.0;
  double t = 0.0;
  double x1 = 0.0;
  double x2 = 0.0;
};

struct ValidationReport {
  std::vector<LipschitzRatio> ratios;
  double min_vol_times_l = 0.0;
  double envelope_error = 0.0;
  double sup_gap = 0.0;     // max over samples of (b p + F) - H; positive means H is not an upper bound
  double argmax_gap = 0.0;  // max |H - (b p + F)(a*)|
  std::vector<std::string> failures;
  bool passed = true;
};

/// Sampling audit of the declared Lipschitz constant, ellipticity and the Hamiltonian identities on a box.
ValidationReport validate_problem(const HMFGProblem& problem, const StateGrid& grid, Index n_types, Index n_samples,
                                  std::uint64_t seed);

}  // namespace hmfg
