#pragma once

#include <string>
#include <vector>

#include "hmfg/problem.hpp"
#include "hmfg/value_field.hpp"

namespace hmfg {

/// Heterogeneous linear-quadratic game with K types:
/// b = a, sigma = s_l, F = -a^2/2 - (c_l/2)(x - w_l mbar)^2, G = 0, mbar = (1/K) sum_l mean(mu_l),
/// actions clamped to [-action_bound, action_bound].
struct LQBenchmark {
  Vector cost;      // c_l >= 0
  Vector coupling;  // w_l
  Vector vol;       // s_l > 0
  Vector init_mean;
  Vector init_std;
  double horizon = 0.5;
  double action_bound = 10.0;
  double lipschitz = 25.0;
  std::string name = "lq";

  Index n_types() const { return cost.size(); }
  /// Type index l with theta in ((l-1)/K, l/K].
  Index type_index(double theta) const;
  void validate() const;
};

/// Builds per-type parameter vectors from functions of theta at theta_l = l/K.
template <class C, class W, class S, class M, class V>
LQBenchmark make_lq(Index n_types, C&& cost, W&& coupling, S&& vol, M&& init_mean, V&& init_std, double horizon) {
  LQBenchmark b;
  b.cost.resize(n_types);
  b.coupling.resize(n_types);
  b.vol.resize(n_types);
  b.init_mean.resize(n_types);
  b.init_std.resize(n_types);
  for (Index l = 0; l < n_types; ++l) {
    const double th = static_cast<double>(l + 1) / static_cast<double>(n_types);
    b.cost[l] = cost(th);
    b.coupling[l] = coupling(th);
    b.vol[l] = vol(th);
    b.init_mean[l] = init_mean(th);
    b.init_std[l] = init_std(th);
  }
  b.horizon = horizon;
  return b;
}

/// Coupled four-type instance used throughout the test suite.
LQBenchmark lq_k4();
/// Same types with zero coupling.
LQBenchmark lq_decoupled();
/// Long-horizon anti-coordination instance on which undamped Picard iteration oscillates.
LQBenchmark lq_long();

/// Lipschitz bound of the LQ coefficients on states and means in [-x_abs_max, x_abs_max].
double lq_lipschitz_bound(const LQBenchmark& bench, double x_abs_max);

HMFGProblem make_problem(const LQBenchmark& bench);

/// Gaussian initial laws N(m0_l, std0_l^2) restricted to the grid.
MeasureEnsemble initial_ensemble(const LQBenchmark& bench, const StateGrid& grid);

/// Riccati and mean/variance paths of the LQ equilibrium on a uniform RK4 grid over [0, T].
/// The value of type l is u_l(t, x) = -A_l x^2 / 2 + B_l x + C_l with B = Pi m and
/// C_l = c0_l + m^T Q_l m, which also gives the decoupling field as a function of the type means m.
struct RiccatiSolution {
  LQBenchmark bench;
  std::vector<double> times;
  RowMatrix a;                            // (n+1) x K
  std::vector<Eigen::MatrixXd> pi;        // K x K per node
  std::vector<std::vector<Eigen::MatrixXd>> q;  // per node, per type, K x K
  RowMatrix c0;                           // (n+1) x K
  RowMatrix mean;                         // (n+1) x K
  RowMatrix variance;                     // (n+1) x K

  Index n_nodes() const { return static_cast<Index>(times.size()); }
  double step() const { return times[1] - times[0]; }

  /// Coefficients at node n along the equilibrium means.
  double b_coef(Index n, Index l) const;
  double c_coef(Index n, Index l) const;

  /// Value, gradient, mean and variance at any t in [0, T] (linear interpolation between RK4 nodes).
  double value(Index l, double t, double x) const;
  double gradient(Index l, double t, double x) const;
  double mean_at(Index l, double t) const;
  double variance_at(Index l, double t) const;

  /// Analytic value field of type l on the solver grids.
  ValueField value_field(Index l, const SolverGrids& grids) const;
  /// Gaussian equilibrium flow restricted to the solver grids.
  EnsembleFlow flow(const SolverGrids& grids) const;
};

/// Integrates the Riccati system backward and the means/variances forward with n_steps RK4 steps.
/// Throws SolverError reporting the blow-up time when the backward system diverges.
RiccatiSolution riccati_oracle(const LQBenchmark& bench, Index n_steps);

/// Right-hand sides of the backward system, exposed for residual checks.
struct RiccatiRates {
  Vector a;
  Eigen::MatrixXd pi;
  std::vector<Eigen::MatrixXd> q;
  Vector c0;
};
RiccatiRates riccati_rates(const LQBenchmark& bench, const Vector& a, const Eigen::MatrixXd& pi,
                           const std::vector<Eigen::MatrixXd>& q);

}  // namespace hmfg
