#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "hmfg/equilibrium.hpp"
#include "hmfg/lq.hpp"

namespace hmfg {

using ScalarFn = std::function<double(double)>;

/// f(mu) = h((1/K) sum_l b_w(theta_l) E_{mu_l}[psi]).
struct TestFunctional {
  std::string name;
  ScalarFn h;
  ScalarFn dh;
  ScalarFn psi;
  ScalarFn dpsi;
  ScalarFn d2psi;
  ScalarFn type_weight;

  void validate() const;
};

TestFunctional mean_functional();
TestFunctional second_moment_functional();
/// h(y) = y^2, psi(x) = x, b_w(theta) = theta.
TestFunctional squared_weighted_mean_functional();

/// Integral of g against a measure (trapezoidal rule for grid densities).
double expectation(const Measure& mu, const ScalarFn& g);

double aggregate(const TestFunctional& tf, const MeasureEnsemble& mu);
double evaluate(const TestFunctional& tf, const MeasureEnsemble& mu);

/// h'(aggregate(mu)) psi(x) b_w(theta).
double linear_functional_derivative(const TestFunctional& tf, const MeasureEnsemble& mu, double x, double theta);

/// Type-wise mixture (1 - eps) mu + eps nu; both ensembles must be grid ensembles on one grid or both empirical.
MeasureEnsemble mix_ensembles(const MeasureEnsemble& mu, const MeasureEnsemble& nu, double eps);

/// (f(mu + eps (nu - mu)) - f(mu)) / eps for an arbitrary functional.
double directional_derivative_fd(const std::function<double(const MeasureEnsemble&)>& f, const MeasureEnsemble& mu,
                                 const MeasureEnsemble& nu, double eps);

/// (1/K) sum_l E_{nu_l - mu_l}[delta f / delta mu(mu, ., theta_l)].
double directional_derivative(const TestFunctional& tf, const MeasureEnsemble& mu, const MeasureEnsemble& nu);

/// Type-wise coefficients of the particle dynamics dX = b dt + sigma dB.
struct ParticleDynamics {
  std::function<double(double theta, double t, double x)> drift;
  std::function<double(double theta, double t, double x)> vol;
};

struct ItoParams {
  Index particles = 100000;
  double dt = 1e-3;
  double horizon = 0.25;
  std::uint64_t seed = 1;
  int workers = 1;

  void validate() const;
};

struct FlowDerivativeReport {
  double lhs = 0.0;
  double rhs = 0.0;
  double abs_err = 0.0;
  double rel_err = 0.0;
  Index particles = 0;
  double dt = 0.0;
  std::uint64_t seed = 0;
  /// K-average of the per-type cloud means of B_T and its standard error.
  double elln_mean = 0.0;
  double elln_se = 0.0;
};

/// Simulates K independent clouds from mu0 and compares f(mu_T) - f(mu_0) with the time integral of
/// (1/K) sum_l b_w(theta_l) h'(.) E[psi'(X) b + psi''(X) sigma^2 / 2] (trapezoidal in time).
FlowDerivativeReport ito_check(const TestFunctional& tf, const ParticleDynamics& dynamics, const MeasureEnsemble& mu0,
                               const ItoParams& params);

struct ItoCase {
  std::string name;
  TestFunctional functional;
  ParticleDynamics dynamics;
  MeasureEnsemble mu0;
  double horizon = 0.25;
  /// Closed-form value of f(mu_T) - f(mu_0) when known.
  std::function<double(double horizon)> exact;
};

/// The three built-in cases on K = 4 Gaussian types: drift 1 with the mean functional, pure diffusion with
/// the second-moment functional, and an Ornstein-Uhlenbeck drift with the squared weighted mean.
std::vector<ItoCase> builtin_ito_cases(const StateGrid& grid);

struct ItoSummary {
  std::string name;
  std::vector<FlowDerivativeReport> runs;
  double lhs_mean = 0.0;
  double rhs_mean = 0.0;
  /// Standard error of the seed-mean of lhs - rhs.
  double combined_se = 0.0;
  double diff = 0.0;
  double exact = 0.0;
  bool has_exact = false;
  bool passed = false;
  /// Fewer than two seeds, or the 3-SE band is wider than kItoResolution times the signal.
  bool inconclusive = false;
};

/// Relative width of the 3-SE band above which an Ito comparison has too little power to decide.
inline constexpr double kItoResolution = 0.02;

ItoSummary run_ito_case(const ItoCase& c, ItoParams params, const std::vector<std::uint64_t>& seeds);

struct DecouplingParams {
  Index paths = 20000;
  double dt = 1e-3;
  Index checkpoints = 10;
  Index quadrature_nodes = 20;
  std::uint64_t seed = 1;
  int workers = 1;

  void validate() const;
};

struct DecouplingReport {
  /// max over types and checkpoints of |E[Y_s - Y_{s+dt} - Fhat dt]| / dt.
  double drift_residual = 0.0;
  /// max over types and checkpoints of E[(Y_{s+dt} - E_s Y_{s+dt} - Z dB)^2] / dt.
  double martingale_residual = 0.0;
  /// max over types and paths of |Y_T - G(theta, X_T, rho_T)|.
  double terminal_error = 0.0;
  std::vector<double> checkpoint_times;
  RowMatrix drift_by_checkpoint;  // K x checkpoints
  double dt = 0.0;
  Index paths = 0;
  std::uint64_t seed = 0;
};

/// Y_s = u(s, X_s) along equilibrium paths, with the conditional expectation over one Euler step computed by
/// Gauss-Hermite quadrature. dt must be a multiple of the value-field time step.
DecouplingReport decoupling_residual(const HMFGProblem& problem, const EquilibriumSolution& solution,
                                     const DecouplingParams& params);

/// Equilibrium of an LQ benchmark assembled from the Riccati solution on the given grids.
EquilibriumSolution riccati_solution(const LQBenchmark& bench, const SolverGrids& grids);

struct MasterResidualReport {
  std::vector<double> times;
  std::vector<double> x;
  /// Analytic-route residual along the equilibrium means, one n_t x n_x matrix per type.
  std::vector<RowMatrix> field;
  double max_analytic = 0.0;
  double max_fd = 0.0;
  /// Largest difference between the two routes.
  double max_route_gap = 0.0;
  Index samples = 0;
};

struct MasterParams {
  /// RK4 steps of the Riccati solve; must be a multiple of n_t - 1.
  Index riccati_steps = 0;
  /// Random mean vectors evaluated in addition to the equilibrium means.
  Index random_means = 8;
  double mean_range = 2.0;
  double fd_step = 1e-5;
  std::uint64_t seed = 1;
};

/// Residual of the master equation for V(theta_l, t, x, m) = -A_l x^2/2 + (Pi m)_l x + c0_l + m^T Q_l m,
/// with the ensemble-derivative term sum_j dV/dm_j ((Pi - D_A) m)_j. Nodes where the action bound binds are
/// skipped. The finite-difference route differentiates in m with step fd_step and in t by central differences.
MasterResidualReport master_residual_lq(const LQBenchmark& bench, const SolverGrids& grids, MasterParams params = {});

}  // namespace hmfg
