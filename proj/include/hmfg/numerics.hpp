#pragma once

#include <Eigen/Core>
#include <array>
#include <cmath>
#include <stdexcept>
#include <string>

namespace hmfg::detail {

/// Compensated summation.
template <class Scalar = double>
class NeumaierSum {
 public:
  void add(Scalar x) {
    const Scalar t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x)) {
      comp_ += (sum_ - t) + x;
    } else {
      comp_ += (x - t) + sum_;
    }
    sum_ = t;
  }
  Scalar value() const { return sum_ + comp_; }

 private:
  Scalar sum_{0};
  Scalar comp_{0};
};

/// Solves the tridiagonal system lower[i] x[i-1] + diag[i] x[i] + upper[i] x[i+1] = rhs[i].
/// Requires weak diagonal dominance with a strictly dominant row; throws on a zero pivot.
template <class Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, 1> solve_tridiagonal(const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& lower,
                                                           const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& diag,
                                                           const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& upper,
                                                           const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& rhs) {
  const Eigen::Index n = diag.size();
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> c(n), d(n);
  Scalar pivot = diag[0];
  if (pivot == Scalar(0)) throw std::runtime_error("solve_tridiagonal: zero pivot at row 0");
  c[0] = n > 1 ? upper[0] / pivot : Scalar(0);
  d[0] = rhs[0] / pivot;
  for (Eigen::Index i = 1; i < n; ++i) {
    pivot = diag[i] - lower[i] * c[i - 1];
    if (pivot == Scalar(0) || !std::isfinite(static_cast<double>(pivot))) {
      throw std::runtime_error("solve_tridiagonal: singular pivot at row " + std::to_string(i));
    }
    c[i] = i + 1 < n ? upper[i] / pivot : Scalar(0);
    d[i] = (rhs[i] - lower[i] * d[i - 1]) / pivot;
  }
  for (Eigen::Index i = n - 2; i >= 0; --i) d[i] -= c[i] * d[i + 1];
  return d;
}

/// Classical fourth-order Runge-Kutta step for y' = f(t, y).
template <class State, class Rhs, class Scalar>
State rk4_step(const Rhs& f, Scalar t, const State& y, Scalar h) {
  const State k1 = f(t, y);
  const State k2 = f(t + h / 2, State(y + (h / 2) * k1));
  const State k3 = f(t + h / 2, State(y + (h / 2) * k2));
  const State k4 = f(t + h, State(y + h * k3));
  return State(y + (h / 6) * (k1 + 2 * k2 + 2 * k3 + k4));
}

/// Linear interpolation of node values y on a uniform grid starting at x0 with spacing h, clamped at the ends.
template <class Scalar, class Values>
Scalar interpolate_uniform(const Values& y, Scalar x0, Scalar h, Scalar x) {
  const Eigen::Index n = y.size();
  Scalar s = (x - x0) / h;
  if (!(s > 0)) return y[0];
  if (s >= static_cast<Scalar>(n - 1)) return y[n - 1];
  const auto k = static_cast<Eigen::Index>(std::floor(s));
  const Scalar w = s - static_cast<Scalar>(k);
  return (1 - w) * y[k] + w * y[k + 1];
}

}  // namespace hmfg::detail
