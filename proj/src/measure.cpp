#include "hmfg/measure.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>
#include <string>

#include "hmfg/errors.hpp"
#include "hmfg/numerics.hpp"

namespace hmfg {

namespace {

constexpr double kMassTolerance = 1e-9;
constexpr double kWeightTolerance = 1e-12;

std::string describe(std::string_view label) { return std::string(label); }

// Exact integral of x^power * rho(x) for the piecewise-linear density (Simpson is exact up to cubics).
double grid_moment(const StateGrid& grid, const Vector& rho, int power) {
  detail::NeumaierSum acc;
  const double h = grid.dx();
  for (Index k = 0; k + 1 < grid.size(); ++k) {
    const double x0 = grid.node(k);
    const double x1 = grid.node(k + 1);
    const double xm = 0.5 * (x0 + x1);
    const double rm = 0.5 * (rho[k] + rho[k + 1]);
    const double f0 = std::pow(x0, power) * rho[k];
    const double f1 = std::pow(x1, power) * rho[k + 1];
    const double fm = std::pow(xm, power) * rm;
    acc.add(h / 6.0 * (f0 + 4.0 * fm + f1));
  }
  return acc.value();
}

}  // namespace

double trapezoid(const StateGrid& grid, const Vector& values) {
  detail::NeumaierSum acc;
  const Index n = values.size();
  for (Index i = 0; i < n; ++i) acc.add((i == 0 || i + 1 == n) ? 0.5 * values[i] : values[i]);
  return acc.value() * grid.dx();
}

GridMeasure::GridMeasure(const StateGrid& grid, Vector density, std::string_view label) : grid_(grid) {
  if (density.size() != grid.size()) {
    throw ValidationError(describe(label) + ": density has " + std::to_string(density.size()) +
                          " values for a grid of " + std::to_string(grid.size()) + " nodes");
  }
  for (Index i = 0; i < density.size(); ++i) {
    if (!std::isfinite(density[i]) || density[i] < 0.0) {
      std::ostringstream os;
      os << describe(label) << ": density value " << density[i] << " at node " << i << " is negative or not finite";
      throw ValidationError(os.str());
    }
  }
  const double mass = trapezoid(grid, density);
  if (std::abs(mass - 1.0) > kMassTolerance) {
    std::ostringstream os;
    os.precision(17);
    os << describe(label) << ": trapezoidal mass " << mass << " differs from 1 by more than 1e-9";
    throw ValidationError(os.str());
  }
  Vector cum(grid.size());
  cum[0] = 0.0;
  for (Index k = 0; k + 1 < grid.size(); ++k) cum[k + 1] = cum[k] + 0.5 * grid.dx() * (density[k] + density[k + 1]);
  mean_ = grid_moment(grid, density, 1);
  density_ = std::make_shared<const Vector>(std::move(density));
  cumulative_ = std::make_shared<const Vector>(std::move(cum));
}

GridMeasure GridMeasure::normalized(const StateGrid& grid, Vector density, std::string_view label) {
  if (density.size() != grid.size()) {
    throw ValidationError(describe(label) + ": density size does not match grid");
  }
  for (Index i = 0; i < density.size(); ++i) {
    if (!std::isfinite(density[i]) || density[i] < 0.0) {
      throw ValidationError(describe(label) + ": density must be finite and nonnegative before normalization");
    }
  }
  const double mass = trapezoid(grid, density);
  if (!(mass > 0.0)) throw ValidationError(describe(label) + ": density has zero mass");
  density /= mass;
  return GridMeasure(grid, std::move(density), label);
}

GridMeasure GridMeasure::gaussian(const StateGrid& grid, double mean, double std) {
  if (!(std > 0.0)) throw ValidationError("gaussian: standard deviation must be positive");
  return from_pdf(grid, [&](double x) {
    const double z = (x - mean) / std;
    return std::exp(-0.5 * z * z);
  });
}

double GridMeasure::second_moment() const { return grid_moment(grid_, *density_, 2); }

double GridMeasure::cdf(double x) const {
  if (x < grid_.x_min()) return 0.0;
  if (x >= grid_.x_max()) return (*cumulative_)[grid_.size() - 1];
  const Index k = grid_.cell(x);
  const Vector& rho = *density_;
  const double s = x - grid_.node(k);
  return (*cumulative_)[k] + rho[k] * s + (rho[k + 1] - rho[k]) * s * s / (2.0 * grid_.dx());
}

double GridMeasure::quantile(double u) const {
  const Vector& cum = *cumulative_;
  const Vector& rho = *density_;
  const Index n = grid_.size();
  const double target = std::clamp(u, 0.0, 1.0) * cum[n - 1];
  const auto* begin = cum.data();
  const auto* it = std::upper_bound(begin, begin + n, target);
  Index k = static_cast<Index>(it - begin) - 1;
  k = std::clamp<Index>(k, 0, n - 2);
  const double delta = std::max(0.0, target - cum[k]);
  const double a = rho[k];
  const double c = (rho[k + 1] - rho[k]) / (2.0 * grid_.dx());
  double s = 0.0;
  if (c == 0.0) {
    s = a > 0.0 ? delta / a : 0.0;
  } else {
    const double den = a + std::sqrt(std::max(0.0, a * a + 4.0 * c * delta));
    s = den > 0.0 ? 2.0 * delta / den : 0.0;
  }
  return grid_.node(k) + std::clamp(s, 0.0, grid_.dx());
}

EmpiricalMeasure::EmpiricalMeasure(std::vector<double> atoms, std::vector<double> weights, std::string_view label) {
  if (atoms.empty()) throw ValidationError(describe(label) + ": needs at least one atom");
  if (atoms.size() != weights.size()) {
    throw ValidationError(describe(label) + ": atoms and weights differ in length");
  }
  detail::NeumaierSum total;
  detail::NeumaierSum first;
  for (std::size_t j = 0; j < atoms.size(); ++j) {
    if (!std::isfinite(atoms[j])) {
      throw ValidationError(describe(label) + ": atom " + std::to_string(j) + " is not finite");
    }
    if (!std::isfinite(weights[j]) || weights[j] < 0.0) {
      throw ValidationError(describe(label) + ": weight " + std::to_string(j) + " is negative or not finite");
    }
    total.add(weights[j]);
    first.add(weights[j] * atoms[j]);
  }
  if (std::abs(total.value() - 1.0) > kWeightTolerance) {
    std::ostringstream os;
    os.precision(17);
    os << describe(label) << ": weights sum to " << total.value() << ", expected 1 within 1e-12";
    throw ValidationError(os.str());
  }
  mean_ = first.value();
  atoms_ = std::make_shared<const std::vector<double>>(std::move(atoms));
  weights_ = std::make_shared<const std::vector<double>>(std::move(weights));
}

EmpiricalMeasure EmpiricalMeasure::uniform(std::vector<double> atoms, std::string_view label) {
  const std::size_t n = atoms.size();
  if (n == 0) throw ValidationError(describe(label) + ": needs at least one atom");
  std::vector<double> w(n, 1.0 / static_cast<double>(n));
  return EmpiricalMeasure(std::move(atoms), std::move(w), label);
}

double EmpiricalMeasure::second_moment() const {
  detail::NeumaierSum acc;
  for (std::size_t j = 0; j < atoms_->size(); ++j) acc.add((*weights_)[j] * (*atoms_)[j] * (*atoms_)[j]);
  return acc.value();
}

MixedMeasure::MixedMeasure(GridMeasure base, EmpiricalMeasure atoms, double atom_mass)
    : base_(std::move(base)), atoms_(std::move(atoms)), atom_mass_(atom_mass) {
  if (!(atom_mass >= 0.0 && atom_mass <= 1.0)) throw ValidationError("MixedMeasure: atom mass must lie in [0, 1]");
}

double mean(const Measure& mu) {
  return std::visit([](const auto& m) { return m.mean(); }, mu);
}

double second_moment(const Measure& mu) {
  return std::visit(
      [](const auto& m) -> double {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, MixedMeasure>) {
          return (1.0 - m.atom_mass()) * m.base().second_moment() + m.atom_mass() * m.atoms().second_moment();
        } else {
          return m.second_moment();
        }
      },
      mu);
}

namespace {

double kernel(double u, double bandwidth) {
  const double z = u / bandwidth;
  return std::exp(-0.5 * z * z) / (bandwidth * std::sqrt(2.0 * std::numbers::pi));
}

double smoothed_grid(const GridMeasure& g, double x, double bandwidth) {
  const StateGrid& grid = g.grid();
  const Vector& rho = g.density();
  const double reach = 6.0 * bandwidth;
  const Index lo = std::max<Index>(0, static_cast<Index>(std::floor((x - reach - grid.x_min()) / grid.dx())));
  const Index hi =
      std::min<Index>(grid.size() - 1, static_cast<Index>(std::ceil((x + reach - grid.x_min()) / grid.dx())));
  double acc = 0.0;
  for (Index i = lo; i <= hi; ++i) {
    const double w = (i == 0 || i + 1 == grid.size()) ? 0.5 : 1.0;
    acc += w * rho[i] * kernel(x - grid.node(i), bandwidth);
  }
  return acc * grid.dx();
}

double smoothed_atoms(const EmpiricalMeasure& e, double x, double bandwidth) {
  double acc = 0.0;
  for (Index j = 0; j < e.size(); ++j) {
    acc += e.weights()[static_cast<std::size_t>(j)] * kernel(x - e.atoms()[static_cast<std::size_t>(j)], bandwidth);
  }
  return acc;
}

}  // namespace

double smoothed_density(const Measure& mu, double x, double bandwidth) {
  if (!(bandwidth > 0.0)) throw ValidationError("smoothed_density: bandwidth must be positive");
  return std::visit(
      [&](const auto& m) -> double {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, GridMeasure>) {
          return smoothed_grid(m, x, bandwidth);
        } else if constexpr (std::is_same_v<T, EmpiricalMeasure>) {
          return smoothed_atoms(m, x, bandwidth);
        } else {
          return (1.0 - m.atom_mass()) * smoothed_grid(m.base(), x, bandwidth) +
                 m.atom_mass() * smoothed_atoms(m.atoms(), x, bandwidth);
        }
      },
      mu);
}

std::vector<double> MeasureEnsemble::uniform_type_points(Index n_types) {
  if (n_types < 1) throw ValidationError("MeasureEnsemble: need at least one type");
  std::vector<double> theta(static_cast<std::size_t>(n_types));
  for (Index l = 0; l < n_types; ++l) {
    theta[static_cast<std::size_t>(l)] = static_cast<double>(l + 1) / static_cast<double>(n_types);
  }
  return theta;
}

MeasureEnsemble::MeasureEnsemble(std::vector<Measure> measures) {
  auto points = uniform_type_points(static_cast<Index>(measures.size()));
  init(std::move(measures), std::move(points));
}

MeasureEnsemble::MeasureEnsemble(std::vector<Measure> measures, std::vector<double> type_points) {
  init(std::move(measures), std::move(type_points));
}

void MeasureEnsemble::init(std::vector<Measure> measures, std::vector<double> type_points) {
  if (measures.empty()) throw ValidationError("MeasureEnsemble: need at least one type");
  if (measures.size() != type_points.size()) {
    throw ValidationError("MeasureEnsemble: " + std::to_string(measures.size()) + " measures but " +
                          std::to_string(type_points.size()) + " type points");
  }
  for (std::size_t l = 0; l < type_points.size(); ++l) {
    const double th = type_points[l];
    if (!(th > 0.0 && th <= 1.0) || (l > 0 && !(th > type_points[l - 1]))) {
      throw ValidationError("MeasureEnsemble: type points must be strictly increasing in (0, 1]");
    }
  }
  all_grid_ = true;
  for (std::size_t l = 0; l < measures.size(); ++l) {
    const StateGrid* g = nullptr;
    if (const auto* gm = std::get_if<GridMeasure>(&measures[l])) {
      g = &gm->grid();
    } else if (const auto* mm = std::get_if<MixedMeasure>(&measures[l])) {
      g = &mm->base().grid();
      all_grid_ = false;
    } else {
      all_grid_ = false;
    }
    if (g != nullptr) {
      if (!grid_) {
        grid_ = std::make_shared<const StateGrid>(*g);
      } else if (!(*grid_ == *g)) {
        throw ValidationError("MeasureEnsemble: type " + std::to_string(l) + " uses a different grid");
      }
    }
  }
  means_.resize(measures.size());
  detail::NeumaierSum avg;
  for (std::size_t l = 0; l < measures.size(); ++l) {
    means_[l] = hmfg::mean(measures[l]);
    avg.add(means_[l]);
  }
  average_mean_ = avg.value() / static_cast<double>(measures.size());
  measures_ = std::make_shared<const std::vector<Measure>>(std::move(measures));
  type_points_ = std::make_shared<const std::vector<double>>(std::move(type_points));
}

const StateGrid& MeasureEnsemble::grid() const {
  if (!grid_) throw ValidationError("MeasureEnsemble: ensemble has no grid-valued types");
  return *grid_;
}

const GridMeasure& MeasureEnsemble::grid_measure(Index l) const {
  const auto* g = std::get_if<GridMeasure>(&(*this)[l]);
  if (g == nullptr) throw ValidationError("MeasureEnsemble: type " + std::to_string(l) + " is not a grid measure");
  return *g;
}

EnsembleFlow::EnsembleFlow(std::vector<double> times, std::vector<MeasureEnsemble> snapshots)
    : times_(std::move(times)), snapshots_(std::move(snapshots)) {
  if (times_.empty() || times_.size() != snapshots_.size()) {
    throw ValidationError("EnsembleFlow: need one snapshot per time node and at least one node");
  }
  for (std::size_t n = 1; n < times_.size(); ++n) {
    if (!(times_[n] > times_[n - 1])) throw ValidationError("EnsembleFlow: times must be strictly increasing");
  }
  const auto& first = snapshots_.front();
  for (std::size_t n = 1; n < snapshots_.size(); ++n) {
    const auto& s = snapshots_[n];
    if (s.n_types() != first.n_types()) {
      throw ValidationError("EnsembleFlow: snapshot " + std::to_string(n) + " has a different number of types");
    }
    if (s.is_grid() != first.is_grid() || (s.is_grid() && !(s.grid() == first.grid()))) {
      throw ValidationError("EnsembleFlow: snapshot " + std::to_string(n) + " uses a different grid");
    }
  }
}

EnsembleFlow EnsembleFlow::frozen(const MeasureEnsemble& mu0, const std::vector<double>& times) {
  return EnsembleFlow(times, std::vector<MeasureEnsemble>(times.size(), mu0));
}

EnsembleFlow EnsembleFlow::from_densities(const StateGrid& grid, std::vector<double> times,
                                          std::vector<double> type_points, const std::vector<RowMatrix>& densities) {
  const std::size_t k = densities.size();
  if (k != type_points.size()) throw ValidationError("EnsembleFlow: density blocks and type points differ in number");
  std::vector<MeasureEnsemble> snaps;
  snaps.reserve(times.size());
  for (std::size_t n = 0; n < times.size(); ++n) {
    std::vector<Measure> ms;
    ms.reserve(k);
    for (std::size_t l = 0; l < k; ++l) {
      if (densities[l].rows() != static_cast<Index>(times.size()) || densities[l].cols() != grid.size()) {
        throw ValidationError("EnsembleFlow: density block " + std::to_string(l) + " has the wrong shape");
      }
      ms.emplace_back(GridMeasure::normalized(grid, densities[l].row(static_cast<Index>(n)).transpose(),
                                              "type " + std::to_string(l) + " at node " + std::to_string(n)));
    }
    snaps.emplace_back(std::move(ms), type_points);
  }
  return EnsembleFlow(std::move(times), std::move(snaps));
}

Index EnsembleFlow::node_at_or_before(double t) const {
  const auto it = std::upper_bound(times_.begin(), times_.end(), t);
  if (it == times_.begin()) return 0;
  return static_cast<Index>(std::distance(times_.begin(), it)) - 1;
}

EnsembleFlow EnsembleFlow::slice(Index first, Index last) const {
  if (first < 0 || last >= n_times() || last < first) throw ValidationError("EnsembleFlow::slice: invalid range");
  return EnsembleFlow(std::vector<double>(times_.begin() + first, times_.begin() + last + 1),
                      std::vector<MeasureEnsemble>(snapshots_.begin() + first, snapshots_.begin() + last + 1));
}

EnsembleFlow interpolate(const EnsembleFlow& a, const EnsembleFlow& b, double lambda) {
  if (!(lambda > 0.0 && lambda <= 1.0)) throw ValidationError("interpolate: lambda must lie in (0, 1]");
  if (a.times() != b.times() || a.n_types() != b.n_types()) {
    throw ValidationError("interpolate: flows are not aligned");
  }
  if (lambda == 1.0) return b;
  const StateGrid& grid = a.grid();
  std::vector<MeasureEnsemble> snaps;
  snaps.reserve(static_cast<std::size_t>(a.n_times()));
  for (Index n = 0; n < a.n_times(); ++n) {
    std::vector<Measure> ms;
    for (Index l = 0; l < a.n_types(); ++l) {
      Vector rho = (1.0 - lambda) * a.density(n, l) + lambda * b.density(n, l);
      ms.emplace_back(GridMeasure::normalized(grid, std::move(rho), "interpolated density"));
    }
    snaps.emplace_back(std::move(ms), a.type_points());
  }
  return EnsembleFlow(a.times(), std::move(snaps));
}

EnsembleFlow concatenate(const std::vector<EnsembleFlow>& pieces) {
  if (pieces.empty()) throw ValidationError("concatenate: no pieces");
  std::vector<double> times;
  std::vector<MeasureEnsemble> snaps;
  for (std::size_t p = 0; p < pieces.size(); ++p) {
    const auto& piece = pieces[p];
    Index start = 0;
    if (p > 0) {
      if (piece.time(0) != times.back()) throw ValidationError("concatenate: pieces do not share boundary nodes");
      start = 1;
    }
    for (Index n = start; n < piece.n_times(); ++n) {
      times.push_back(piece.time(n));
      snaps.push_back(piece.snapshot(n));
    }
  }
  return EnsembleFlow(std::move(times), std::move(snaps));
}

}  // namespace hmfg
