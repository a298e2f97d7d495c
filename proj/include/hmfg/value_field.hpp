#pragma once

#include <vector>

#include "hmfg/grid.hpp"

namespace hmfg {

/// Value u(t, x) and spatial gradient p = du/dx of one type on a time x state grid.
struct ValueField {
  double theta = 1.0;
  StateGrid grid;
  std::vector<double> times;
  RowMatrix u;  // n_times x n_x
  RowMatrix p;  // n_times x n_x

  Index n_times() const { return static_cast<Index>(times.size()); }

  /// Linear interpolation in x at time node n.
  double value_at(Index n, double x) const;
  double gradient_at(Index n, double x) const;

  /// Cubic Hermite interpolation in x at time node n using stored values and gradients.
  double value_hermite(Index n, double x) const;
  double gradient_hermite(Index n, double x) const;

  /// Bilinear interpolation in (t, x).
  double value(double t, double x) const;
  double gradient(double t, double x) const;
};

/// Centered differences inside, one-sided at the two edges.
Vector centered_gradient(const StateGrid& grid, const Eigen::Ref<const Vector>& u);

}  // namespace hmfg
