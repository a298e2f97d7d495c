#include "hmfg/grid.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "hmfg/errors.hpp"

namespace hmfg {

StateGrid::StateGrid(double x_min, double x_max, Index n_x) : x_min_(x_min), x_max_(x_max), n_x_(n_x) {
  if (!(std::isfinite(x_min) && std::isfinite(x_max) && x_min < x_max)) {
    throw ValidationError("StateGrid: require finite x_min < x_max, got [" + std::to_string(x_min) + ", " +
                          std::to_string(x_max) + "]");
  }
  if (n_x < 3) throw ValidationError("StateGrid: n_x must be at least 3, got " + std::to_string(n_x));
  dx_ = (x_max - x_min) / static_cast<double>(n_x - 1);
}

Vector StateGrid::nodes() const {
  Vector x(n_x_);
  for (Index i = 0; i < n_x_; ++i) x[i] = node(i);
  return x;
}

Index StateGrid::cell(double x) const {
  const double s = std::floor((x - x_min_) / dx_);
  if (!(s > 0)) return 0;
  return std::min(static_cast<Index>(s), n_x_ - 2);
}

TimeGrid::TimeGrid(double t0, double t_end, Index n_t) {
  if (!(std::isfinite(t0) && std::isfinite(t_end) && t0 < t_end)) {
    throw ValidationError("TimeGrid: require t0 < T");
  }
  if (n_t < 2) throw ValidationError("TimeGrid: n_t must be at least 2, got " + std::to_string(n_t));
  dt_ = (t_end - t0) / static_cast<double>(n_t - 1);
  times_.resize(static_cast<std::size_t>(n_t));
  for (Index n = 0; n < n_t; ++n) times_[static_cast<std::size_t>(n)] = t0 + dt_ * static_cast<double>(n);
  times_.back() = t_end;
}

TimeGrid TimeGrid::window(Index first, Index last) const {
  if (first < 0 || last >= size() || last <= first) {
    throw ValidationError("TimeGrid::window: invalid node range " + std::to_string(first) + ".." +
                          std::to_string(last));
  }
  return TimeGrid(std::vector<double>(times_.begin() + first, times_.begin() + last + 1), dt_);
}

CflRecord cfl_record(const TimeGrid& time, const StateGrid& space, double lipschitz) {
  const double bound = space.dx() * space.dx() * lipschitz * lipschitz;
  return {time.dt(), space.dx(), bound, time.dt() <= bound};
}

}  // namespace hmfg
