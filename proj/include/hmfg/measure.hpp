#pragma once

#include <memory>
#include <string_view>
#include <variant>
#include <vector>

#include "hmfg/grid.hpp"

namespace hmfg {

/// Probability measure with a piecewise-linear density sampled at the nodes of a StateGrid.
/// The trapezoidal mass of the density must equal 1 within 1e-9.
class GridMeasure {
 public:
  GridMeasure(const StateGrid& grid, Vector density, std::string_view label = "grid measure");

  /// Rescales a nonnegative density to unit trapezoidal mass.
  static GridMeasure normalized(const StateGrid& grid, Vector density, std::string_view label = "grid measure");

  /// Samples pdf at the nodes and normalizes.
  template <class Pdf>
  static GridMeasure from_pdf(const StateGrid& grid, Pdf&& pdf, std::string_view label = "grid measure") {
    Vector rho(grid.size());
    for (Index i = 0; i < grid.size(); ++i) rho[i] = pdf(grid.node(i));
    return normalized(grid, std::move(rho), label);
  }

  /// Gaussian N(mean, std^2) restricted to the grid and normalized.
  static GridMeasure gaussian(const StateGrid& grid, double mean, double std);

  const StateGrid& grid() const { return grid_; }
  const Vector& density() const { return *density_; }
  double mean() const { return mean_; }
  double second_moment() const;
  /// Right-continuous CDF of the piecewise-linear density.
  double cdf(double x) const;
  /// Generalized inverse of cdf for u in [0, 1].
  double quantile(double u) const;

 private:
  StateGrid grid_;
  std::shared_ptr<const Vector> density_;
  std::shared_ptr<const Vector> cumulative_;
  double mean_ = 0.0;
};

/// Discrete measure sum_j w_j delta_{a_j}; weights sum to 1 within 1e-12.
class EmpiricalMeasure {
 public:
  EmpiricalMeasure(std::vector<double> atoms, std::vector<double> weights,
                   std::string_view label = "empirical measure");
  static EmpiricalMeasure uniform(std::vector<double> atoms, std::string_view label = "empirical measure");

  const std::vector<double>& atoms() const { return *atoms_; }
  const std::vector<double>& weights() const { return *weights_; }
  Index size() const { return static_cast<Index>(atoms_->size()); }
  double mean() const { return mean_; }
  double second_moment() const;

 private:
  std::shared_ptr<const std::vector<double>> atoms_;
  std::shared_ptr<const std::vector<double>> weights_;
  double mean_ = 0.0;
};

/// (1 - atom_mass) * base + atom_mass * atoms.
class MixedMeasure {
 public:
  MixedMeasure(GridMeasure base, EmpiricalMeasure atoms, double atom_mass);

  const GridMeasure& base() const { return base_; }
  const EmpiricalMeasure& atoms() const { return atoms_; }
  double atom_mass() const { return atom_mass_; }
  double mean() const { return (1.0 - atom_mass_) * base_.mean() + atom_mass_ * atoms_.mean(); }

 private:
  GridMeasure base_;
  EmpiricalMeasure atoms_;
  double atom_mass_;
};

using Measure = std::variant<GridMeasure, EmpiricalMeasure, MixedMeasure>;

double mean(const Measure& mu);
double second_moment(const Measure& mu);

/// Gaussian-kernel smoothing (phi_l * mu)(x); grid densities use the trapezoidal rule at the nodes.
double smoothed_density(const Measure& mu, double x, double bandwidth);

/// Trapezoidal integral of node values.
double trapezoid(const StateGrid& grid, const Vector& values);

/// K-type array of measures with type points theta_1 < ... < theta_K in (0, 1].
class MeasureEnsemble {
 public:
  /// Type points default to l/K.
  explicit MeasureEnsemble(std::vector<Measure> measures);
  MeasureEnsemble(std::vector<Measure> measures, std::vector<double> type_points);

  static std::vector<double> uniform_type_points(Index n_types);

  Index n_types() const { return static_cast<Index>(measures_->size()); }
  const Measure& operator[](Index l) const { return (*measures_)[static_cast<std::size_t>(l)]; }
  const std::vector<Measure>& measures() const { return *measures_; }
  const std::vector<double>& type_points() const { return *type_points_; }
  double type_point(Index l) const { return (*type_points_)[static_cast<std::size_t>(l)]; }

  double mean(Index l) const { return means_[static_cast<std::size_t>(l)]; }
  /// (1/K) sum_l mean(l).
  double average_mean() const { return average_mean_; }

  /// True when every type is a GridMeasure.
  bool is_grid() const { return grid_ != nullptr && all_grid_; }
  /// Grid shared by the grid-valued types; throws when there is none.
  const StateGrid& grid() const;
  const GridMeasure& grid_measure(Index l) const;

 private:
  void init(std::vector<Measure> measures, std::vector<double> type_points);

  std::shared_ptr<const std::vector<Measure>> measures_;
  std::shared_ptr<const std::vector<double>> type_points_;
  std::vector<double> means_;
  double average_mean_ = 0.0;
  std::shared_ptr<const StateGrid> grid_;
  bool all_grid_ = false;
};

/// Time-indexed sequence of ensembles sharing K and the grid.
class EnsembleFlow {
 public:
  EnsembleFlow(std::vector<double> times, std::vector<MeasureEnsemble> snapshots);

  /// The constant-in-time flow t -> mu0.
  static EnsembleFlow frozen(const MeasureEnsemble& mu0, const std::vector<double>& times);

  /// Builds a grid flow from per-type density matrices (n_times x n_x), normalizing each row.
  static EnsembleFlow from_densities(const StateGrid& grid, std::vector<double> times,
                                     std::vector<double> type_points, const std::vector<RowMatrix>& densities);

  Index n_times() const { return static_cast<Index>(times_.size()); }
  Index n_types() const { return snapshots_.front().n_types(); }
  const std::vector<double>& times() const { return times_; }
  double time(Index n) const { return times_[static_cast<std::size_t>(n)]; }
  const MeasureEnsemble& snapshot(Index n) const { return snapshots_[static_cast<std::size_t>(n)]; }
  const MeasureEnsemble& front() const { return snapshots_.front(); }
  const MeasureEnsemble& back() const { return snapshots_.back(); }
  const std::vector<double>& type_points() const { return snapshots_.front().type_points(); }

  bool is_grid() const { return snapshots_.front().is_grid(); }
  const StateGrid& grid() const { return snapshots_.front().grid(); }
  const Vector& density(Index n, Index l) const { return snapshot(n).grid_measure(l).density(); }

  /// Largest node index n with times[n] <= t (clamped to the flow's range).
  Index node_at_or_before(double t) const;

  EnsembleFlow slice(Index first, Index last) const;

 private:
  std::vector<double> times_;
  std::vector<MeasureEnsemble> snapshots_;
};

/// Pointwise convex combination (1 - lambda) * a + lambda * b of two grid flows on the same nodes.
EnsembleFlow interpolate(const EnsembleFlow& a, const EnsembleFlow& b, double lambda);

/// Concatenates flows whose boundary nodes coincide; the first node of each later piece is dropped.
EnsembleFlow concatenate(const std::vector<EnsembleFlow>& pieces);

}  // namespace hmfg
