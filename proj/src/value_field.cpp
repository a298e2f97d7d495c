#include "hmfg/value_field.hpp"

#include <algorithm>
#include <cmath>

namespace hmfg {

namespace {

double row_linear(const StateGrid& grid, const RowMatrix& m, Index n, double x) {
  const Index k = grid.cell(x);
  const double w = std::clamp((x - grid.node(k)) / grid.dx(), 0.0, 1.0);
  return (1.0 - w) * m(n, k) + w * m(n, k + 1);
}

struct TimeWeight {
  Index n;
  double w;
};

TimeWeight locate(const std::vector<double>& times, double t) {
  if (times.size() < 2 || t <= times.front()) return {0, 0.0};
  if (t >= times.back()) return {static_cast<Index>(times.size()) - 2, 1.0};
  const auto it = std::upper_bound(times.begin(), times.end(), t);
  const Index n = static_cast<Index>(std::distance(times.begin(), it)) - 1;
  const double w = (t - times[static_cast<std::size_t>(n)]) /
                   (times[static_cast<std::size_t>(n) + 1] - times[static_cast<std::size_t>(n)]);
  return {n, w};
}

}  // namespace

double ValueField::value_at(Index n, double x) const { return row_linear(grid, u, n, x); }

double ValueField::gradient_at(Index n, double x) const { return row_linear(grid, p, n, x); }

double ValueField::value_hermite(Index n, double x) const {
  const Index k = grid.cell(x);
  const double h = grid.dx();
  const double s = std::clamp((x - grid.node(k)) / h, 0.0, 1.0);
  const double s2 = s * s;
  const double s3 = s2 * s;
  const double h00 = 2 * s3 - 3 * s2 + 1;
  const double h10 = s3 - 2 * s2 + s;
  const double h01 = -2 * s3 + 3 * s2;
  const double h11 = s3 - s2;
  return h00 * u(n, k) + h10 * h * p(n, k) + h01 * u(n, k + 1) + h11 * h * p(n, k + 1);
}

double ValueField::gradient_hermite(Index n, double x) const {
  const Index k = grid.cell(x);
  const double h = grid.dx();
  const double s = std::clamp((x - grid.node(k)) / h, 0.0, 1.0);
  const double s2 = s * s;
  const double d00 = 6 * s2 - 6 * s;
  const double d10 = 3 * s2 - 4 * s + 1;
  const double d01 = -6 * s2 + 6 * s;
  const double d11 = 3 * s2 - 2 * s;
  return (d00 * u(n, k) + d01 * u(n, k + 1)) / h + d10 * p(n, k) + d11 * p(n, k + 1);
}

double ValueField::value(double t, double x) const {
  const auto [n, w] = locate(times, t);
  if (n_times() < 2) return value_at(0, x);
  return (1.0 - w) * value_at(n, x) + w * value_at(n + 1, x);
}

double ValueField::gradient(double t, double x) const {
  const auto [n, w] = locate(times, t);
  if (n_times() < 2) return gradient_at(0, x);
  return (1.0 - w) * gradient_at(n, x) + w * gradient_at(n + 1, x);
}

Vector centered_gradient(const StateGrid& grid, const Eigen::Ref<const Vector>& u) {
  const Index n = grid.size();
  const double h = grid.dx();
  Vector p(n);
  p[0] = (u[1] - u[0]) / h;
  p[n - 1] = (u[n - 1] - u[n - 2]) / h;
  for (Index i = 1; i + 1 < n; ++i) p[i] = (u[i + 1] - u[i - 1]) / (2.0 * h);
  return p;
}

}  // namespace hmfg
