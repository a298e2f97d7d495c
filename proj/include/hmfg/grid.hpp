#pragma once

#include <Eigen/Core>
#include <vector>

namespace hmfg {

using Index = Eigen::Index;
using Vector = Eigen::VectorXd;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Uniform grid on [x_min, x_max] with n_x nodes.
class StateGrid {
 public:
  StateGrid(double x_min, double x_max, Index n_x);

  double x_min() const { return x_min_; }
  double x_max() const { return x_max_; }
  Index size() const { return n_x_; }
  double dx() const { return dx_; }
  double node(Index i) const { return i + 1 == n_x_ ? x_max_ : x_min_ + dx_ * static_cast<double>(i); }
  Vector nodes() const;

  /// Index k of the cell [x_k, x_{k+1}] containing x, clamped to the grid.
  Index cell(double x) const;

  friend bool operator==(const StateGrid&, const StateGrid&) = default;

 private:
  double x_min_;
  double x_max_;
  Index n_x_;
  double dx_;
};

/// Uniform time grid t0 = t_0 < ... < t_{n_t-1} = T.
class TimeGrid {
 public:
  TimeGrid(double t0, double t_end, Index n_t);

  double t0() const { return times_.front(); }
  double t_end() const { return times_.back(); }
  Index size() const { return static_cast<Index>(times_.size()); }
  double dt() const { return dt_; }
  double time(Index n) const { return times_[static_cast<std::size_t>(n)]; }
  const std::vector<double>& times() const { return times_; }

  /// Sub-grid of nodes first..last (inclusive) sharing this grid's time values.
  TimeGrid window(Index first, Index last) const;

  friend bool operator==(const TimeGrid&, const TimeGrid&) = default;

 private:
  TimeGrid(std::vector<double> times, double dt) : times_(std::move(times)), dt_(dt) {}
  std::vector<double> times_;
  double dt_;
};

/// Stability diagnostic: dt against dx^2 * L^2.
struct CflRecord {
  double dt;
  double dx;
  double bound;
  bool within;
};

CflRecord cfl_record(const TimeGrid& time, const StateGrid& space, double lipschitz);

struct SolverGrids {
  StateGrid space;
  TimeGrid time;
};

}  // namespace hmfg
