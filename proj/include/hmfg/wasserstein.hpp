#pragma once

#include <optional>
#include <vector>

#include "hmfg/measure.hpp"

namespace hmfg {

/// W1 as the exact integral of |F_mu - F_nu| over the real line.
double wasserstein1(const Measure& mu, const Measure& nu);

/// W2 as the L2 distance between quantile functions.
double wasserstein2(const Measure& mu, const Measure& nu);

/// Dispatches on p in {1, 2}.
double wasserstein(const Measure& mu, const Measure& nu, int p);

/// (1/K) sum_l W_p(phi_l, psi_l).
double ensemble_distance(const MeasureEnsemble& phi, const MeasureEnsemble& psi, int p);

/// ensemble_distance at every shared time node.
std::vector<double> ensemble_distance_profile(const EnsembleFlow& rho, const EnsembleFlow& rho_bar, int p);

/// Max over time nodes of ensemble_distance.
double flow_distance(const EnsembleFlow& rho, const EnsembleFlow& rho_bar, int p);

/// Silverman's rule 0.9 min(sd, IQR/1.34) n^(-1/5) for the atoms of e (weights ignored).
double silverman_bandwidth(const EmpiricalMeasure& e);

/// Gaussian kernel density estimate at the grid nodes, renormalized to unit mass.
GridMeasure empirical_to_grid(const EmpiricalMeasure& e, const StateGrid& grid,
                              std::optional<double> bandwidth = std::nullopt);

}  // namespace hmfg
