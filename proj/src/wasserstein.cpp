#include "hmfg/wasserstein.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <numeric>
#include <sstream>

#include "hmfg/errors.hpp"
#include "hmfg/numerics.hpp"
#include "hmfg/quadrature.hpp"

namespace hmfg {

namespace {

// CDF that is quadratic on each [x_k, x_{k+1}) and constant beyond the last breakpoint.
// value[k] is the right limit F(x_k); slope and curv give F(x_k + s) = value + slope s + curv s^2.
struct PiecewiseCdf {
  std::vector<double> x;
  std::vector<double> value;
  std::vector<double> slope;
  std::vector<double> curv;

  std::size_t size() const { return x.size(); }
};

struct LocalPoly {
  double c0 = 0.0;
  double c1 = 0.0;
  double c2 = 0.0;
};

// Cursor over breakpoints for monotone evaluation points.
class CdfCursor {
 public:
  explicit CdfCursor(const PiecewiseCdf& f) : f_(f) {}

  // Coefficients of F(y + s) in s, valid until the next breakpoint of f after y.
  LocalPoly at(double y) {
    while (next_ < f_.size() && f_.x[next_] <= y) ++next_;
    if (next_ == 0) return {};
    const std::size_t k = next_ - 1;
    if (k + 1 == f_.size()) return {f_.value[k], 0.0, 0.0};
    const double s = y - f_.x[k];
    return {f_.value[k] + (f_.slope[k] + f_.curv[k] * s) * s, f_.slope[k] + 2.0 * f_.curv[k] * s, f_.curv[k]};
  }

 private:
  const PiecewiseCdf& f_;
  std::size_t next_ = 0;
};

PiecewiseCdf grid_cdf(const GridMeasure& g) {
  const StateGrid& grid = g.grid();
  const Vector& rho = g.density();
  const auto n = static_cast<std::size_t>(grid.size());
  const double h = grid.dx();
  PiecewiseCdf f;
  f.x.resize(n);
  f.value.resize(n);
  f.slope.assign(n, 0.0);
  f.curv.assign(n, 0.0);
  double cum = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const auto i = static_cast<Index>(k);
    f.x[k] = grid.node(i);
    f.value[k] = cum;
    if (k + 1 < n) {
      f.slope[k] = rho[i];
      f.curv[k] = (rho[i + 1] - rho[i]) / (2.0 * h);
      cum += 0.5 * h * (rho[i] + rho[i + 1]);
    }
  }
  // Rescale so the total is exactly one.
  const double total = cum;
  for (std::size_t k = 0; k < n; ++k) {
    f.value[k] /= total;
    f.slope[k] /= total;
    f.curv[k] /= total;
  }
  f.value[n - 1] = 1.0;
  return f;
}

PiecewiseCdf atom_cdf(const EmpiricalMeasure& e) {
  const auto n = static_cast<std::size_t>(e.size());
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return e.atoms()[a] < e.atoms()[b]; });
  PiecewiseCdf f;
  detail::NeumaierSum cum;
  for (std::size_t j = 0; j < n; ++j) {
    const double a = e.atoms()[order[j]];
    cum.add(e.weights()[order[j]]);
    if (!f.x.empty() && f.x.back() == a) {
      f.value.back() = cum.value();
    } else {
      f.x.push_back(a);
      f.value.push_back(cum.value());
    }
  }
  f.slope.assign(f.x.size(), 0.0);
  f.curv.assign(f.x.size(), 0.0);
  f.value.back() = 1.0;
  return f;
}

std::vector<double> merged_breakpoints(const PiecewiseCdf& a, const PiecewiseCdf& b) {
  std::vector<double> u;
  u.reserve(a.size() + b.size());
  std::merge(a.x.begin(), a.x.end(), b.x.begin(), b.x.end(), std::back_inserter(u));
  u.erase(std::unique(u.begin(), u.end()), u.end());
  return u;
}

PiecewiseCdf mix(const PiecewiseCdf& a, double wa, const PiecewiseCdf& b, double wb) {
  PiecewiseCdf f;
  f.x = merged_breakpoints(a, b);
  CdfCursor ca(a);
  CdfCursor cb(b);
  for (double y : f.x) {
    const LocalPoly pa = ca.at(y);
    const LocalPoly pb = cb.at(y);
    f.value.push_back(wa * pa.c0 + wb * pb.c0);
    f.slope.push_back(wa * pa.c1 + wb * pb.c1);
    f.curv.push_back(wa * pa.c2 + wb * pb.c2);
  }
  f.value.back() = 1.0;
  f.slope.back() = 0.0;
  f.curv.back() = 0.0;
  return f;
}

PiecewiseCdf to_cdf(const Measure& mu) {
  return std::visit(
      [](const auto& m) -> PiecewiseCdf {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, GridMeasure>) {
          return grid_cdf(m);
        } else if constexpr (std::is_same_v<T, EmpiricalMeasure>) {
          return atom_cdf(m);
        } else {
          return mix(grid_cdf(m.base()), 1.0 - m.atom_mass(), atom_cdf(m.atoms()), m.atom_mass());
        }
      },
      mu);
}

// Integral of |d0 + d1 s + d2 s^2| over [0, h].
double integrate_abs_quadratic(double d0, double d1, double d2, double h) {
  std::array<double, 4> cuts{0.0, h, h, h};
  std::size_t n = 1;
  auto push_root = [&](double r) {
    if (r > 0.0 && r < h) cuts[n++] = r;
  };
  if (d2 == 0.0) {
    if (d1 != 0.0) push_root(-d0 / d1);
  } else {
    const double disc = d1 * d1 - 4.0 * d2 * d0;
    if (disc > 0.0) {
      const double q = -0.5 * (d1 + std::copysign(std::sqrt(disc), d1));
      if (q != 0.0) {
        push_root(q / d2);
        push_root(d0 / q);
      } else {
        push_root(0.0);
      }
    }
  }
  std::sort(cuts.begin() + 1, cuts.begin() + static_cast<std::ptrdiff_t>(n));
  cuts[n] = h;
  auto prim = [&](double s) { return s * (d0 + s * (d1 / 2.0 + s * d2 / 3.0)); };
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) total += std::abs(prim(cuts[i + 1]) - prim(cuts[i]));
  return total;
}

double w1_cdf(const PiecewiseCdf& a, const PiecewiseCdf& b) {
  const std::vector<double> y = merged_breakpoints(a, b);
  CdfCursor ca(a);
  CdfCursor cb(b);
  detail::NeumaierSum acc;
  for (std::size_t j = 0; j + 1 < y.size(); ++j) {
    const LocalPoly pa = ca.at(y[j]);
    const LocalPoly pb = cb.at(y[j]);
    acc.add(integrate_abs_quadratic(pa.c0 - pb.c0, pa.c1 - pb.c1, pa.c2 - pb.c2, y[j + 1] - y[j]));
  }
  return acc.value();
}

// Monotone piece of a quantile function over [u_lo, u_hi].
struct QuantilePiece {
  double u_lo;
  double u_hi;
  double x0;      // atom location, or left breakpoint of the segment
  double value;   // F(x0) for segments
  double slope;
  double curv;
  double width;   // segment length; zero marks an atom
};

double quantile_in(const QuantilePiece& p, double u) {
  if (p.width == 0.0) return p.x0;
  const double delta = std::max(0.0, u - p.value);
  double s = 0.0;
  if (p.curv == 0.0) {
    s = p.slope > 0.0 ? delta / p.slope : 0.0;
  } else {
    const double disc = std::max(0.0, p.slope * p.slope + 4.0 * p.curv * delta);
    const double den = p.slope + std::sqrt(disc);
    s = den > 0.0 ? 2.0 * delta / den : 0.0;
  }
  return p.x0 + std::clamp(s, 0.0, p.width);
}

std::vector<QuantilePiece> quantile_pieces(const PiecewiseCdf& f) {
  std::vector<QuantilePiece> pieces;
  double left = 0.0;
  for (std::size_t k = 0; k < f.size(); ++k) {
    if (f.value[k] > left) pieces.push_back({left, f.value[k], f.x[k], 0.0, 0.0, 0.0, 0.0});
    if (k + 1 == f.size()) break;
    const double h = f.x[k + 1] - f.x[k];
    const double right = f.value[k] + (f.slope[k] + f.curv[k] * h) * h;
    if (right > f.value[k]) pieces.push_back({f.value[k], right, f.x[k], f.value[k], f.slope[k], f.curv[k], h});
    left = std::max(right, f.value[k]);
  }
  return pieces;
}

double w2_cdf(const PiecewiseCdf& a, const PiecewiseCdf& b) {
  static const QuadratureRule rule = gauss_legendre(8);
  const auto pa = quantile_pieces(a);
  const auto pb = quantile_pieces(b);
  std::size_t i = 0;
  std::size_t j = 0;
  double u = 0.0;
  detail::NeumaierSum acc;
  while (i < pa.size() && j < pb.size()) {
    const double hi = std::min(pa[i].u_hi, pb[j].u_hi);
    if (hi > u) {
      const double mid = 0.5 * (u + hi);
      const double half = 0.5 * (hi - u);
      if (pa[i].width == 0.0 && pb[j].width == 0.0) {
        const double d = pa[i].x0 - pb[j].x0;
        acc.add(d * d * (hi - u));
      } else {
        double part = 0.0;
        for (Index q = 0; q < rule.nodes.size(); ++q) {
          const double uq = mid + half * rule.nodes[q];
          const double d = quantile_in(pa[i], uq) - quantile_in(pb[j], uq);
          part += rule.weights[q] * d * d;
        }
        acc.add(part * half);
      }
      u = hi;
    }
    if (pa[i].u_hi <= u) ++i;
    if (j < pb.size() && pb[j].u_hi <= u) ++j;
  }
  return std::sqrt(std::max(0.0, acc.value()));
}

void check_same_grid(const Measure& mu, const Measure& nu) {
  const auto* a = std::get_if<GridMeasure>(&mu);
  const auto* b = std::get_if<GridMeasure>(&nu);
  if (a != nullptr && b != nullptr && !(a->grid() == b->grid())) {
    throw ValidationError("wasserstein: grid measures live on different grids");
  }
}

}  // namespace

double wasserstein1(const Measure& mu, const Measure& nu) {
  check_same_grid(mu, nu);
  return w1_cdf(to_cdf(mu), to_cdf(nu));
}

double wasserstein2(const Measure& mu, const Measure& nu) {
  check_same_grid(mu, nu);
  return w2_cdf(to_cdf(mu), to_cdf(nu));
}

double wasserstein(const Measure& mu, const Measure& nu, int p) {
  if (p == 1) return wasserstein1(mu, nu);
  if (p == 2) return wasserstein2(mu, nu);
  throw ValidationError("wasserstein: p must be 1 or 2, got " + std::to_string(p));
}

double ensemble_distance(const MeasureEnsemble& phi, const MeasureEnsemble& psi, int p) {
  if (phi.n_types() != psi.n_types()) {
    throw ValidationError("ensemble_distance: ensembles have " + std::to_string(phi.n_types()) + " and " +
                          std::to_string(psi.n_types()) + " types");
  }
  if (phi.is_grid() && psi.is_grid() && !(phi.grid() == psi.grid())) {
    throw ValidationError("ensemble_distance: ensembles use different grids");
  }
  detail::NeumaierSum acc;
  for (Index l = 0; l < phi.n_types(); ++l) acc.add(wasserstein(phi[l], psi[l], p));
  return acc.value() / static_cast<double>(phi.n_types());
}

std::vector<double> ensemble_distance_profile(const EnsembleFlow& rho, const EnsembleFlow& rho_bar, int p) {
  if (rho.n_times() != rho_bar.n_times()) throw ValidationError("flow_distance: time grids are misaligned");
  std::vector<double> out(static_cast<std::size_t>(rho.n_times()));
  for (Index n = 0; n < rho.n_times(); ++n) {
    const double ta = rho.time(n);
    const double tb = rho_bar.time(n);
    if (std::abs(ta - tb) > 1e-12 * std::max(1.0, std::abs(ta))) {
      throw ValidationError("flow_distance: time grids are misaligned at node " + std::to_string(n));
    }
    out[static_cast<std::size_t>(n)] = ensemble_distance(rho.snapshot(n), rho_bar.snapshot(n), p);
  }
  return out;
}

double flow_distance(const EnsembleFlow& rho, const EnsembleFlow& rho_bar, int p) {
  const auto profile = ensemble_distance_profile(rho, rho_bar, p);
  return *std::max_element(profile.begin(), profile.end());
}

double silverman_bandwidth(const EmpiricalMeasure& e) {
  std::vector<double> x = e.atoms();
  const auto n = static_cast<double>(x.size());
  if (x.size() < 2) throw ValidationError("silverman_bandwidth: need at least two atoms");
  const double m = std::accumulate(x.begin(), x.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : x) ss += (v - m) * (v - m);
  const double sd = std::sqrt(ss / (n - 1.0));
  std::sort(x.begin(), x.end());
  auto quantile = [&](double q) {
    const double pos = q * (n - 1.0);
    const auto k = static_cast<std::size_t>(std::floor(pos));
    const double w = pos - static_cast<double>(k);
    return k + 1 < x.size() ? (1.0 - w) * x[k] + w * x[k + 1] : x.back();
  };
  const double iqr = quantile(0.75) - quantile(0.25);
  double spread = sd;
  if (iqr > 0.0) spread = std::min(sd, iqr / 1.34);
  if (!(spread > 0.0)) throw ValidationError("silverman_bandwidth: atoms have zero spread");
  return 0.9 * spread * std::pow(n, -0.2);
}

GridMeasure empirical_to_grid(const EmpiricalMeasure& e, const StateGrid& grid, std::optional<double> bandwidth) {
  const double bw = bandwidth ? *bandwidth : silverman_bandwidth(e);
  if (!(bw > 0.0)) throw ValidationError("empirical_to_grid: bandwidth must be positive");
  const double lo = grid.x_min() - 3.0 * bw;
  const double hi = grid.x_max() + 3.0 * bw;
  std::vector<std::size_t> outside;
  for (std::size_t j = 0; j < e.atoms().size(); ++j) {
    if (e.atoms()[j] < lo || e.atoms()[j] > hi) outside.push_back(j);
  }
  if (!outside.empty()) {
    std::ostringstream os;
    os.precision(17);
    os << "empirical_to_grid: " << outside.size() << " atoms outside [" << lo << ", " << hi << "]:";
    for (std::size_t i = 0; i < std::min<std::size_t>(outside.size(), 10); ++i) {
      os << " #" << outside[i] << "=" << e.atoms()[outside[i]];
    }
    if (outside.size() > 10) os << " ...";
    throw ValidationError(os.str());
  }
  std::vector<std::size_t> order(e.atoms().size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return e.atoms()[a] < e.atoms()[b]; });
  std::vector<double> sorted(order.size());
  for (std::size_t j = 0; j < order.size(); ++j) sorted[j] = e.atoms()[order[j]];
  const double reach = 8.0 * bw;
  const double norm = 1.0 / (bw * std::sqrt(2.0 * std::numbers::pi));
  Vector rho(grid.size());
  for (Index i = 0; i < grid.size(); ++i) {
    const double x = grid.node(i);
    const auto first = std::lower_bound(sorted.begin(), sorted.end(), x - reach);
    const auto last = std::upper_bound(sorted.begin(), sorted.end(), x + reach);
    double acc = 0.0;
    for (auto it = first; it != last; ++it) {
      const auto j = static_cast<std::size_t>(std::distance(sorted.begin(), it));
      const double z = (x - *it) / bw;
      acc += e.weights()[order[j]] * std::exp(-0.5 * z * z);
    }
    rho[i] = acc * norm;
  }
  return GridMeasure::normalized(grid, std::move(rho), "kernel density estimate");
}

}  // namespace hmfg
