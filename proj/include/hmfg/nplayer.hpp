#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "hmfg/equilibrium.hpp"
#include "hmfg/rng.hpp"

namespace hmfg {

/// N players split into K clusters; player i in cluster l plays the type-l/K strategy.
struct NPlayerConfig {
  Index n_players = 0;
  Index n_types = 0;
  std::vector<Index> cluster_sizes;
  double dt = 0.01;
  Index n_paths = 1;
  std::uint64_t seed = 0;
  int workers = 1;

  /// Clusters of sizes differing by at most one, larger ones first.
  static NPlayerConfig balanced(Index n_players, Index n_types, double dt, Index n_paths, std::uint64_t seed);

  /// min_l |C_l|.
  Index n_min() const;
  void validate() const;
};

using Feedback = std::function<double(double t, double x)>;

/// Cluster index of every player; clusters occupy consecutive player indices.
std::vector<Index> cluster_labels(const NPlayerConfig& config);

/// Player i in cluster l receives the type-l feedback.
std::vector<Feedback> lift_strategy(const EquilibriumSolution& solution, const NPlayerConfig& config);

/// Initial states drawn i.i.d. per cluster from the type marginal of mu0 by inverse-CDF sampling.
std::vector<double> draw_initial_states(const MeasureEnsemble& mu0, const NPlayerConfig& config, Index replication);

struct PathBundle {
  std::vector<double> times;
  RowMatrix states;  // n_times x N
  std::vector<Index> labels;
  std::vector<double> payoffs;  // G(X_T) + sum F dt per player
  std::uint64_t seed = 0;
  Index replication = 0;
};

/// Empirical ensemble phi^N: cluster l contributes the uniform measure on its players' states.
MeasureEnsemble empirical_ensemble(const Eigen::Ref<const Vector>& states, const std::vector<Index>& labels,
                                   const std::vector<double>& type_points);

/// Euler-Maruyama simulation of the N-player system over [0, T]; increments of player i at step n are
/// keyed by (seed, replication, i, n).
PathBundle simulate_nplayer(const HMFGProblem& problem, const std::vector<Feedback>& feedbacks,
                            const std::vector<double>& x0, const NPlayerConfig& config, Index replication = 0);

struct ChaosReport {
  double statistic = 0.0;  // sup_t mean over replications of d1^2(phi^N_t, rho*_t)
  double ci_half_width = 0.0;
  double argmax_time = 0.0;
  std::vector<double> times;
  std::vector<double> mean_d1_sq;
  double rho_k_proxy = 0.0;
  double delta_w1_sq = 0.0;        // mean of (1/K) sum_l W1^2(phi^N_0,l, mu0_l)
  double delta_moment = 0.0;       // mean of (1/K) sum_l ||x_l||_4^2
  double cluster_term = 0.0;       // 1 / (K n^3)
  Index n_players = 0;
  Index n_types = 0;
  Index n_min = 0;
  Index replications = 0;
  std::uint64_t seed = 0;
};

/// Chaos statistic from per-replication ensemble flows on the same time nodes as rho_star.
ChaosReport chaos_statistic(const std::vector<EnsembleFlow>& samples, const EnsembleFlow& rho_star);

/// Chaos statistic of simulated bundles; rho_star is interpolated in time when bundle nodes fall between its nodes.
ChaosReport chaos_statistic(const std::vector<PathBundle>& bundles, const EnsembleFlow& rho_star,
                            const NPlayerConfig& config);

/// Draws initial states, simulates config.n_paths replications under the lifted equilibrium and evaluates the
/// chaos statistic.
ChaosReport run_chaos(const HMFGProblem& problem, const EquilibriumSolution& solution, const NPlayerConfig& config);

struct ExploitabilityReport {
  double eps_hat = 0.0;
  double j_eq = 0.0;
  double j_dev = 0.0;
  double gain_mean = 0.0;
  double gain_ci_half_width = 0.0;
  double j_mean_field = 0.0;
  Index player = 0;
  Index replications = 0;
};

/// Payoff gain of one player switching to `deviation` while the others keep the lifted equilibrium,
/// estimated with common random numbers.
ExploitabilityReport exploitability_of(const HMFGProblem& problem, const EquilibriumSolution& solution,
                                       const NPlayerConfig& config, Index deviating_player,
                                       const Feedback& deviation);

/// Best response of the deviating player against rho* with its own atom in its cluster's law, i.e.
/// (1 - 1/n_l) rho*_l + (1/n_l) delta_x, from one HJB solve on the solution's grids.
Feedback own_influence_best_response(const HMFGProblem& problem, const EquilibriumSolution& solution,
                                     const NPlayerConfig& config, Index deviating_player);

ExploitabilityReport exploitability(const HMFGProblem& problem, const EquilibriumSolution& solution,
                                    const NPlayerConfig& config, Index deviating_player);

}  // namespace hmfg
