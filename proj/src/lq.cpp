#include "hmfg/lq.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <sstream>

#include "hmfg/errors.hpp"
#include "hmfg/numerics.hpp"

namespace hmfg {

Index LQBenchmark::type_index(double theta) const {
  const auto k = static_cast<double>(n_types());
  const auto l = static_cast<Index>(std::ceil(theta * k - 1e-9)) - 1;
  return std::clamp<Index>(l, 0, n_types() - 1);
}

void LQBenchmark::validate() const {
  const Index k = n_types();
  if (k < 1) throw ValidationError(name + ": need at least one type");
  if (coupling.size() != k || vol.size() != k || init_mean.size() != k || init_std.size() != k) {
    throw ValidationError(name + ": per-type parameter arrays differ in length");
  }
  for (Index l = 0; l < k; ++l) {
    if (!(cost[l] >= 0.0)) throw ValidationError(name + ": cost weight must be nonnegative");
    if (!(vol[l] > 0.0)) throw ValidationError(name + ": volatility must be positive");
    if (!(init_std[l] > 0.0)) throw ValidationError(name + ": initial std must be positive");
    if (!std::isfinite(coupling[l]) || !std::isfinite(init_mean[l])) {
      throw ValidationError(name + ": parameters must be finite");
    }
  }
  if (!(horizon > 0.0)) throw ValidationError(name + ": horizon must be positive");
  if (!(action_bound > 0.0)) throw ValidationError(name + ": action bound must be positive");
  if (!(lipschitz > 0.0)) throw ValidationError(name + ": Lipschitz constant must be positive");
}

LQBenchmark lq_k4() {
  auto b = make_lq(
      4, [](double th) { return 1.0 + th; }, [](double th) { return 0.5 + 0.5 * th; },
      [](double th) { return 0.6 + 0.4 * th; }, [](double th) { return -1.0 + 2.0 * th; },
      [](double) { return 0.5; }, 0.5);
  b.name = "lq-k4";
  return b;
}

LQBenchmark lq_decoupled() {
  auto b = lq_k4();
  b.coupling.setZero();
  b.name = "lq-decoupled";
  return b;
}

LQBenchmark lq_long() {
  auto b = make_lq(
      4, [](double th) { return 1.0 + th; }, [](double th) { return -1.5 - 1.5 * th; },
      [](double th) { return 0.6 + 0.4 * th; }, [](double th) { return -1.0 + 2.0 * th; },
      [](double) { return 0.5; }, 2.0);
  b.name = "lq-long";
  return b;
}

double lq_lipschitz_bound(const LQBenchmark& bench, double x_abs_max) {
  double bound = std::max(1.0, bench.action_bound);
  for (Index l = 0; l < bench.n_types(); ++l) {
    const double w = std::abs(bench.coupling[l]);
    const double reach = (1.0 + w) * x_abs_max;
    bound = std::max(bound, bench.cost[l] * reach * std::max(1.0, w));
    bound = std::max(bound, 1.0 / bench.vol[l]);
  }
  return bound;
}

HMFGProblem make_problem(const LQBenchmark& bench) {
  bench.validate();
  auto b = std::make_shared<const LQBenchmark>(bench);
  HMFGProblem pr;
  pr.name = bench.name;
  pr.actions = {-bench.action_bound, bench.action_bound};
  pr.lipschitz = bench.lipschitz;
  pr.horizon = bench.horizon;
  pr.drift = [](double, double, double, const MeasureEnsemble&, double a) { return a; };
  pr.vol = [b](double th, double, double, const MeasureEnsemble&) { return b->vol[b->type_index(th)]; };
  pr.running_cost = [b](double th, double, double x, const MeasureEnsemble& mu, double a) {
    const Index l = b->type_index(th);
    const double d = x - b->coupling[l] * mu.average_mean();
    return -0.5 * a * a - 0.5 * b->cost[l] * d * d;
  };
  pr.terminal_cost = [](double, double, const MeasureEnsemble&) { return 0.0; };
  pr.hamiltonian = [b](double th, double, double x, double p, const MeasureEnsemble& mu) {
    const Index l = b->type_index(th);
    const double pc = std::clamp(p, -b->action_bound, b->action_bound);
    const double d = x - b->coupling[l] * mu.average_mean();
    return pc * p - 0.5 * pc * pc - 0.5 * b->cost[l] * d * d;
  };
  pr.hamiltonian_grad = [b](double, double, double, double p, const MeasureEnsemble&) {
    return std::clamp(p, -b->action_bound, b->action_bound);
  };
  pr.feedback = pr.hamiltonian_grad;
  return pr;
}

MeasureEnsemble initial_ensemble(const LQBenchmark& bench, const StateGrid& grid) {
  std::vector<Measure> ms;
  for (Index l = 0; l < bench.n_types(); ++l) {
    ms.emplace_back(GridMeasure::gaussian(grid, bench.init_mean[l], bench.init_std[l]));
  }
  return MeasureEnsemble(std::move(ms));
}

namespace {

// Packed layout: A (K), Pi (K*K, column-major), Q_l (K*K each), c0 (K).
struct Layout {
  Index k;
  Index pi() const { return k; }
  Index q(Index l) const { return k + k * k + l * k * k; }
  Index c0() const { return k + k * k + k * k * k; }
  Index size() const { return c0() + k; }
};

struct Unpacked {
  Vector a;
  Eigen::MatrixXd pi;
  std::vector<Eigen::MatrixXd> q;
  Vector c0;
};

Unpacked unpack(const Layout& lay, const Vector& y) {
  const Index k = lay.k;
  Unpacked u;
  u.a = y.head(k);
  u.pi = Eigen::Map<const Eigen::MatrixXd>(y.data() + lay.pi(), k, k);
  for (Index l = 0; l < k; ++l) u.q.emplace_back(Eigen::Map<const Eigen::MatrixXd>(y.data() + lay.q(l), k, k));
  u.c0 = y.segment(lay.c0(), k);
  return u;
}

Vector pack(const Layout& lay, const Vector& a, const Eigen::MatrixXd& pi, const std::vector<Eigen::MatrixXd>& q,
            const Vector& c0) {
  const Index k = lay.k;
  Vector y(lay.size());
  y.head(k) = a;
  Eigen::Map<Eigen::MatrixXd>(y.data() + lay.pi(), k, k) = pi;
  for (Index l = 0; l < k; ++l) Eigen::Map<Eigen::MatrixXd>(y.data() + lay.q(l), k, k) = q[static_cast<std::size_t>(l)];
  y.segment(lay.c0(), k) = c0;
  return y;
}

}  // namespace

RiccatiRates riccati_rates(const LQBenchmark& bench, const Vector& a, const Eigen::MatrixXd& pi,
                           const std::vector<Eigen::MatrixXd>& q) {
  const Index k = bench.n_types();
  const double kk = static_cast<double>(k);
  RiccatiRates r;
  r.a = a.array().square() - bench.cost.array();
  const Eigen::MatrixXd da = a.asDiagonal();
  const Eigen::MatrixXd m = pi - da;
  const Vector cw = bench.cost.cwiseProduct(bench.coupling);
  r.pi = da * pi - pi * m - (cw / kk) * Eigen::RowVectorXd::Ones(k);
  const Eigen::MatrixXd ones = Eigen::MatrixXd::Ones(k, k);
  for (Index l = 0; l < k; ++l) {
    const Eigen::RowVectorXd row = pi.row(l);
    const double wl = bench.coupling[l];
    const Eigen::MatrixXd w = 0.5 * row.transpose() * row - (bench.cost[l] * wl * wl / (2.0 * kk * kk)) * ones;
    const Eigen::MatrixXd& ql = q[static_cast<std::size_t>(l)];
    r.q.push_back(-w - ql * m - m.transpose() * ql);
  }
  r.c0 = 0.5 * bench.vol.array().square() * a.array();
  return r;
}

RiccatiSolution riccati_oracle(const LQBenchmark& bench, Index n_steps) {
  bench.validate();
  if (n_steps < 2) throw ValidationError("riccati_oracle: need at least two steps");
  const Index k = bench.n_types();
  const Layout lay{k};
  const double T = bench.horizon;
  const Index n_half = 2 * n_steps;
  const double h_half = T / static_cast<double>(n_half);

  auto rhs = [&](double, const Vector& y) -> Vector {
    const Unpacked u = unpack(lay, y);
    const RiccatiRates r = riccati_rates(bench, u.a, u.pi, u.q);
    return pack(lay, r.a, r.pi, r.q, r.c0);
  };

  std::vector<Vector> states(static_cast<std::size_t>(n_half + 1));
  states[static_cast<std::size_t>(n_half)] = Vector::Zero(lay.size());
  for (Index j = n_half; j > 0; --j) {
    const double t = T * static_cast<double>(j) / static_cast<double>(n_half);
    Vector next = detail::rk4_step(rhs, t, states[static_cast<std::size_t>(j)], -h_half);
    if (!next.allFinite() || next.cwiseAbs().maxCoeff() > 1e8) {
      std::ostringstream os;
      os << "riccati_oracle: Riccati blow-up at t = " << t - h_half;
      throw SolverError(os.str());
    }
    states[static_cast<std::size_t>(j - 1)] = std::move(next);
  }

  RiccatiSolution sol;
  sol.bench = bench;
  sol.times.resize(static_cast<std::size_t>(n_steps + 1));
  sol.a.resize(n_steps + 1, k);
  sol.c0.resize(n_steps + 1, k);
  sol.mean.resize(n_steps + 1, k);
  sol.variance.resize(n_steps + 1, k);
  for (Index n = 0; n <= n_steps; ++n) {
    sol.times[static_cast<std::size_t>(n)] = n == n_steps ? T : T * static_cast<double>(n) / static_cast<double>(n_steps);
    const Unpacked u = unpack(lay, states[static_cast<std::size_t>(2 * n)]);
    sol.a.row(n) = u.a.transpose();
    sol.c0.row(n) = u.c0.transpose();
    sol.pi.push_back(u.pi);
    sol.q.push_back(u.q);
  }

  // Forward means and variances: m' = (Pi - D_A) m, v' = -2 A v + s^2, with half-node coefficients for RK4.
  const Index two_k = 2 * k;
  auto fwd = [&](Index half_index, const Vector& y) -> Vector {
    const Unpacked u = unpack(lay, states[static_cast<std::size_t>(half_index)]);
    Vector d(two_k);
    const Vector m = y.head(k);
    d.head(k) = u.pi * m - u.a.cwiseProduct(m);
    d.tail(k) = (-2.0 * u.a.array() * y.tail(k).array() + bench.vol.array().square()).matrix();
    return d;
  };
  Vector y(two_k);
  y.head(k) = bench.init_mean;
  y.tail(k) = bench.init_std.array().square().matrix();
  const double h = T / static_cast<double>(n_steps);
  sol.mean.row(0) = y.head(k).transpose();
  sol.variance.row(0) = y.tail(k).transpose();
  for (Index n = 0; n < n_steps; ++n) {
    const Vector k1 = fwd(2 * n, y);
    const Vector k2 = fwd(2 * n + 1, y + 0.5 * h * k1);
    const Vector k3 = fwd(2 * n + 1, y + 0.5 * h * k2);
    const Vector k4 = fwd(2 * n + 2, y + h * k3);
    y += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    sol.mean.row(n + 1) = y.head(k).transpose();
    sol.variance.row(n + 1) = y.tail(k).transpose();
  }
  return sol;
}

double RiccatiSolution::b_coef(Index n, Index l) const {
  return pi[static_cast<std::size_t>(n)].row(l).dot(mean.row(n));
}

double RiccatiSolution::c_coef(Index n, Index l) const {
  const Vector m = mean.row(n).transpose();
  return c0(n, l) + m.dot(q[static_cast<std::size_t>(n)][static_cast<std::size_t>(l)] * m);
}

namespace {

struct NodeWeight {
  Index n;
  double w;
};

NodeWeight locate_node(const std::vector<double>& times, double t) {
  const Index last = static_cast<Index>(times.size()) - 1;
  if (t <= times.front()) return {0, 0.0};
  if (t >= times.back()) return {last - 1, 1.0};
  const double h = times[1] - times[0];
  auto n = static_cast<Index>(std::floor((t - times.front()) / h));
  n = std::clamp<Index>(n, 0, last - 1);
  const double w = (t - times[static_cast<std::size_t>(n)]) / h;
  if (w <= 1e-9) return {n, 0.0};
  if (w >= 1.0 - 1e-9) return {n, 1.0};
  return {n, w};
}

}  // namespace

double RiccatiSolution::value(Index l, double t, double x) const {
  const auto [n, w] = locate_node(times, t);
  auto at = [&](Index j) { return -0.5 * a(j, l) * x * x + b_coef(j, l) * x + c_coef(j, l); };
  return w == 0.0 ? at(n) : (w == 1.0 ? at(n + 1) : (1.0 - w) * at(n) + w * at(n + 1));
}

double RiccatiSolution::gradient(Index l, double t, double x) const {
  const auto [n, w] = locate_node(times, t);
  auto at = [&](Index j) { return -a(j, l) * x + b_coef(j, l); };
  return w == 0.0 ? at(n) : (w == 1.0 ? at(n + 1) : (1.0 - w) * at(n) + w * at(n + 1));
}

double RiccatiSolution::mean_at(Index l, double t) const {
  const auto [n, w] = locate_node(times, t);
  return w == 0.0 ? mean(n, l) : (w == 1.0 ? mean(n + 1, l) : (1.0 - w) * mean(n, l) + w * mean(n + 1, l));
}

double RiccatiSolution::variance_at(Index l, double t) const {
  const auto [n, w] = locate_node(times, t);
  return w == 0.0 ? variance(n, l)
                  : (w == 1.0 ? variance(n + 1, l) : (1.0 - w) * variance(n, l) + w * variance(n + 1, l));
}

ValueField RiccatiSolution::value_field(Index l, const SolverGrids& grids) const {
  const StateGrid& g = grids.space;
  ValueField vf{static_cast<double>(l + 1) / static_cast<double>(bench.n_types()), g, grids.time.times(),
                RowMatrix(grids.time.size(), g.size()), RowMatrix(grids.time.size(), g.size())};
  for (Index n = 0; n < grids.time.size(); ++n) {
    const double t = grids.time.time(n);
    for (Index i = 0; i < g.size(); ++i) {
      vf.u(n, i) = value(l, t, g.node(i));
      vf.p(n, i) = gradient(l, t, g.node(i));
    }
  }
  return vf;
}

EnsembleFlow RiccatiSolution::flow(const SolverGrids& grids) const {
  std::vector<MeasureEnsemble> snaps;
  for (Index n = 0; n < grids.time.size(); ++n) {
    const double t = grids.time.time(n);
    std::vector<Measure> ms;
    for (Index l = 0; l < bench.n_types(); ++l) {
      const double sd = n == 0 ? bench.init_std[l] : std::sqrt(variance_at(l, t));
      ms.emplace_back(GridMeasure::gaussian(grids.space, mean_at(l, t), sd));
    }
    snaps.emplace_back(std::move(ms));
  }
  return EnsembleFlow(grids.time.times(), std::move(snaps));
}

}  // namespace hmfg
