#include "hmfg/mfcalculus.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <random>

#include "hmfg/errors.hpp"
#include "hmfg/numerics.hpp"
#include "hmfg/parallel.hpp"
#include "hmfg/quadrature.hpp"
#include "hmfg/rng.hpp"

namespace hmfg {

void TestFunctional::validate() const {
  if (!h || !dh || !psi || !dpsi || !d2psi || !type_weight) {
    throw ValidationError("TestFunctional '" + name + "': all six functions must be set");
  }
}

TestFunctional mean_functional() {
  return {"type-mean",
          [](double y) { return y; },
          [](double) { return 1.0; },
          [](double x) { return x; },
          [](double) { return 1.0; },
          [](double) { return 0.0; },
          [](double) { return 1.0; }};
}

TestFunctional second_moment_functional() {
  return {"second-moment",
          [](double y) { return y; },
          [](double) { return 1.0; },
          [](double x) { return x * x; },
          [](double x) { return 2.0 * x; },
          [](double) { return 2.0; },
          [](double) { return 1.0; }};
}

TestFunctional squared_weighted_mean_functional() {
  return {"squared-weighted-mean",
          [](double y) { return y * y; },
          [](double y) { return 2.0 * y; },
          [](double x) { return x; },
          [](double) { return 1.0; },
          [](double) { return 0.0; },
          [](double th) { return th; }};
}

double expectation(const Measure& mu, const ScalarFn& g) {
  if (const auto* gm = std::get_if<GridMeasure>(&mu)) {
    const StateGrid& grid = gm->grid();
    Vector v(grid.size());
    for (Index i = 0; i < grid.size(); ++i) v[i] = gm->density()[i] * g(grid.node(i));
    return trapezoid(grid, v);
  }
  auto atoms = [&g](const EmpiricalMeasure& e) {
    detail::NeumaierSum<double> s;
    for (std::size_t j = 0; j < e.atoms().size(); ++j) s.add(e.weights()[j] * g(e.atoms()[j]));
    return s.value();
  };
  if (const auto* em = std::get_if<EmpiricalMeasure>(&mu)) return atoms(*em);
  const auto& mm = std::get<MixedMeasure>(mu);
  return (1.0 - mm.atom_mass()) * expectation(Measure(mm.base()), g) + mm.atom_mass() * atoms(mm.atoms());
}

double aggregate(const TestFunctional& tf, const MeasureEnsemble& mu) {
  detail::NeumaierSum<double> s;
  for (Index l = 0; l < mu.n_types(); ++l) s.add(tf.type_weight(mu.type_point(l)) * expectation(mu[l], tf.psi));
  return s.value() / static_cast<double>(mu.n_types());
}

double evaluate(const TestFunctional& tf, const MeasureEnsemble& mu) { return tf.h(aggregate(tf, mu)); }

double linear_functional_derivative(const TestFunctional& tf, const MeasureEnsemble& mu, double x, double theta) {
  return tf.dh(aggregate(tf, mu)) * tf.psi(x) * tf.type_weight(theta);
}

MeasureEnsemble mix_ensembles(const MeasureEnsemble& mu, const MeasureEnsemble& nu, double eps) {
  if (mu.n_types() != nu.n_types()) throw ValidationError("mix_ensembles: K mismatch");
  if (!(eps >= 0.0 && eps <= 1.0)) throw ValidationError("mix_ensembles: eps must lie in [0, 1]");
  std::vector<Measure> out;
  for (Index l = 0; l < mu.n_types(); ++l) {
    const auto* ga = std::get_if<GridMeasure>(&mu[l]);
    const auto* gb = std::get_if<GridMeasure>(&nu[l]);
    if (ga != nullptr && gb != nullptr) {
      if (!(ga->grid() == gb->grid())) throw ValidationError("mix_ensembles: grids differ");
      out.emplace_back(GridMeasure::normalized(ga->grid(), (1.0 - eps) * ga->density() + eps * gb->density(),
                                               "mixture"));
      continue;
    }
    const auto* ea = std::get_if<EmpiricalMeasure>(&mu[l]);
    const auto* eb = std::get_if<EmpiricalMeasure>(&nu[l]);
    if (ea == nullptr || eb == nullptr) throw ValidationError("mix_ensembles: unsupported measure combination");
    std::vector<double> atoms = ea->atoms();
    atoms.insert(atoms.end(), eb->atoms().begin(), eb->atoms().end());
    std::vector<double> w;
    for (double x : ea->weights()) w.push_back((1.0 - eps) * x);
    for (double x : eb->weights()) w.push_back(eps * x);
    out.emplace_back(EmpiricalMeasure(std::move(atoms), std::move(w), "mixture"));
  }
  return MeasureEnsemble(std::move(out), mu.type_points());
}

double directional_derivative_fd(const std::function<double(const MeasureEnsemble&)>& f, const MeasureEnsemble& mu,
                                 const MeasureEnsemble& nu, double eps) {
  if (!(eps > 0.0)) throw ValidationError("directional_derivative_fd: eps must be positive");
  return (f(mix_ensembles(mu, nu, eps)) - f(mu)) / eps;
}

double directional_derivative(const TestFunctional& tf, const MeasureEnsemble& mu, const MeasureEnsemble& nu) {
  const double slope = tf.dh(aggregate(tf, mu));
  detail::NeumaierSum<double> s;
  for (Index l = 0; l < mu.n_types(); ++l) {
    const double w = tf.type_weight(mu.type_point(l));
    s.add(w * (expectation(nu[l], tf.psi) - expectation(mu[l], tf.psi)));
  }
  return slope * s.value() / static_cast<double>(mu.n_types());
}

void ItoParams::validate() const {
  if (particles < 2) throw ValidationError("ito_check: need at least two particles per type");
  if (!(dt > 0.0) || !(horizon > 0.0)) throw ValidationError("ito_check: dt and horizon must be positive");
  const double steps = horizon / dt;
  if (std::abs(steps - std::round(steps)) > 1e-9 * steps) throw ValidationError("ito_check: dt must divide the horizon");
  if (workers < 1) throw ValidationError("ito_check: workers must be at least 1");
}

namespace {

// Per-type time series of cloud averages.
struct CloudSeries {
  std::vector<double> psi;      // E psi(X_n)
  std::vector<double> drift;    // E psi'(X_n) b
  std::vector<double> diffusion;  // E psi''(X_n) sigma^2
  double brownian_mean = 0.0;
};

double cloud_mean(const std::vector<double>& v) {
  detail::NeumaierSum<double> s;
  for (double x : v) s.add(x);
  return s.value() / static_cast<double>(v.size());
}

}  // namespace

FlowDerivativeReport ito_check(const TestFunctional& tf, const ParticleDynamics& dynamics, const MeasureEnsemble& mu0,
                               const ItoParams& params) {
  tf.validate();
  params.validate();
  if (!dynamics.drift || !dynamics.vol) throw ValidationError("ito_check: drift and vol must be set");
  if (!mu0.is_grid()) throw ValidationError("ito_check: initial law must be a grid ensemble");
  const Index k = mu0.n_types();
  const auto steps = static_cast<Index>(std::llround(params.horizon / params.dt));
  const double dt = params.horizon / static_cast<double>(steps);
  const double sqdt = std::sqrt(dt);
  const Index m = params.particles;
  const CounterRng rng(params.seed);
  std::vector<CloudSeries> series(static_cast<std::size_t>(k));

  parallel_for(k, params.workers, [&](Index l) {
    const double theta = mu0.type_point(l);
    const GridMeasure& g = mu0.grid_measure(l);
    const auto ul = static_cast<std::uint32_t>(l);
    std::vector<double> x(static_cast<std::size_t>(m));
    for (Index j = 0; j < m; j += 2) {
      const auto [u1, u2] = rng.uniform2(Stream::kParticle, ul, 0xFFFFFFFFu, static_cast<std::uint32_t>(j / 2));
      x[static_cast<std::size_t>(j)] = g.quantile(u1);
      if (j + 1 < m) x[static_cast<std::size_t>(j + 1)] = g.quantile(u2);
    }
    CloudSeries& cs = series[static_cast<std::size_t>(l)];
    std::vector<double> a(static_cast<std::size_t>(m)), b(static_cast<std::size_t>(m)), c(static_cast<std::size_t>(m));
    std::vector<double> drift(static_cast<std::size_t>(m));
    detail::NeumaierSum<double> brownian;
    for (Index n = 0;; ++n) {
      const double t = static_cast<double>(n) * dt;
      for (Index j = 0; j < m; ++j) {
        const auto js = static_cast<std::size_t>(j);
        const double xj = x[js];
        const double bj = dynamics.drift(theta, t, xj);
        const double sj = dynamics.vol(theta, t, xj);
        a[js] = tf.psi(xj);
        b[js] = tf.dpsi(xj) * bj;
        c[js] = tf.d2psi(xj) * sj * sj;
        drift[js] = bj;
      }
      cs.psi.push_back(cloud_mean(a));
      cs.drift.push_back(cloud_mean(b));
      cs.diffusion.push_back(cloud_mean(c));
      if (n == steps) break;
      for (Index j = 0; j < m; j += 2) {
        const auto [n1, n2] = rng.normal2(Stream::kParticle, ul, static_cast<std::uint32_t>(n), static_cast<std::uint32_t>(j / 2));
        for (Index q = 0; q < 2 && j + q < m; ++q) {
          const auto js = static_cast<std::size_t>(j + q);
          const double noise = q == 0 ? n1 : n2;
          const double xj = x[js];
          const double next = xj + drift[js] * dt + dynamics.vol(theta, t, xj) * sqdt * noise;
          if (!std::isfinite(next)) {
            throw SolverError("ito_check: non-finite particle " + std::to_string(j + q) + " at step " +
                              std::to_string(n + 1));
          }
          x[js] = next;
          brownian.add(sqdt * noise);
        }
      }
    }
    cs.brownian_mean = brownian.value() / static_cast<double>(m);
  });

  const double kk = static_cast<double>(k);
  std::vector<double> weights(static_cast<std::size_t>(k));
  for (Index l = 0; l < k; ++l) weights[static_cast<std::size_t>(l)] = tf.type_weight(mu0.type_point(l));
  auto agg_at = [&](Index n) {
    double s = 0.0;
    for (Index l = 0; l < k; ++l) s += weights[static_cast<std::size_t>(l)] * series[static_cast<std::size_t>(l)].psi[static_cast<std::size_t>(n)];
    return s / kk;
  };
  auto integrand = [&](Index n) {
    double s = 0.0;
    for (Index l = 0; l < k; ++l) {
      const CloudSeries& cs = series[static_cast<std::size_t>(l)];
      s += weights[static_cast<std::size_t>(l)] *
           (cs.drift[static_cast<std::size_t>(n)] + 0.5 * cs.diffusion[static_cast<std::size_t>(n)]);
    }
    return tf.dh(agg_at(n)) * s / kk;
  };
  detail::NeumaierSum<double> rhs;
  double prev = integrand(0);
  for (Index n = 1; n <= steps; ++n) {
    const double cur = integrand(n);
    rhs.add(0.5 * (prev + cur) * dt);
    prev = cur;
  }
  FlowDerivativeReport rep;
  rep.lhs = tf.h(agg_at(steps)) - tf.h(agg_at(0));
  rep.rhs = rhs.value();
  rep.abs_err = std::abs(rep.lhs - rep.rhs);
  rep.rel_err = rep.abs_err / std::max(std::abs(rep.lhs), 1e-300);
  rep.particles = m;
  rep.dt = dt;
  rep.seed = params.seed;
  double bm = 0.0;
  for (const auto& cs : series) bm += cs.brownian_mean;
  rep.elln_mean = bm / kk;
  rep.elln_se = std::sqrt(params.horizon / (static_cast<double>(m) * kk));
  if (!std::isfinite(rep.lhs) || !std::isfinite(rep.rhs)) throw SolverError("ito_check: non-finite result");
  return rep;
}

std::vector<ItoCase> builtin_ito_cases(const StateGrid& grid) {
  const Index k = 4;
  const auto type_points = MeasureEnsemble::uniform_type_points(k);
  std::vector<Measure> ms;
  std::vector<double> m0(static_cast<std::size_t>(k));
  for (Index l = 0; l < k; ++l) {
    const double th = type_points[static_cast<std::size_t>(l)];
    m0[static_cast<std::size_t>(l)] = -1.0 + 2.0 * th;
    ms.emplace_back(GridMeasure::gaussian(grid, m0[static_cast<std::size_t>(l)], 0.5));
  }
  const MeasureEnsemble mu0(std::move(ms), type_points);
  std::vector<ItoCase> cases;

  ItoCase linear{"linear-drift", mean_functional(),
                 {[](double, double, double) { return 1.0; }, [](double th, double, double) { return 0.3 + 0.4 * th; }},
                 mu0, 0.25, [](double horizon) { return horizon; }};
  cases.push_back(linear);

  const double s = 0.5;
  ItoCase diffusion{"second-moment", second_moment_functional(),
                    {[](double, double, double) { return 0.0; }, [s](double, double, double) { return s; }},
                    mu0, 0.25, [s](double horizon) { return s * s * horizon; }};
  cases.push_back(diffusion);

  // OU drift towards theta: E X_t = theta + (m0 - theta) e^{-t}.
  auto agg = [type_points, m0](double t) {
    double a = 0.0;
    for (std::size_t l = 0; l < type_points.size(); ++l) {
      const double th = type_points[l];
      a += th * (th + (m0[l] - th) * std::exp(-t));
    }
    return a / static_cast<double>(type_points.size());
  };
  ItoCase ou{"squared-weighted-mean", squared_weighted_mean_functional(),
             {[](double th, double, double x) { return th - x; }, [](double, double, double) { return 0.5; }},
             mu0, 0.25, [agg](double horizon) {
               const double a = agg(horizon);
               const double b = agg(0.0);
               return a * a - b * b;
             }};
  cases.push_back(ou);
  return cases;
}

ItoSummary run_ito_case(const ItoCase& c, ItoParams params, const std::vector<std::uint64_t>& seeds) {
  if (seeds.empty()) throw ValidationError("run_ito_case: no seeds");
  params.horizon = c.horizon;
  ItoSummary out;
  out.name = c.name;
  std::vector<double> diffs;
  detail::NeumaierSum<double> lhs, rhs;
  for (std::uint64_t seed : seeds) {
    params.seed = seed;
    out.runs.push_back(ito_check(c.functional, c.dynamics, c.mu0, params));
    lhs.add(out.runs.back().lhs);
    rhs.add(out.runs.back().rhs);
    diffs.push_back(out.runs.back().lhs - out.runs.back().rhs);
  }
  const auto n = static_cast<double>(seeds.size());
  out.lhs_mean = lhs.value() / n;
  out.rhs_mean = rhs.value() / n;
  out.diff = out.lhs_mean - out.rhs_mean;
  if (c.exact) {
    out.exact = c.exact(c.horizon);
    out.has_exact = true;
  }
  if (seeds.size() < 2) {
    out.inconclusive = true;
    return out;
  }
  detail::NeumaierSum<double> ss;
  for (double d : diffs) ss.add((d - out.diff) * (d - out.diff));
  out.combined_se = std::sqrt(ss.value() / (n - 1.0) / n);
  out.passed = std::abs(out.diff) <= 3.0 * out.combined_se;
  const double scale = std::max(std::abs(out.lhs_mean), std::abs(out.rhs_mean));
  out.inconclusive = 3.0 * out.combined_se > kItoResolution * scale;
  return out;
}

void DecouplingParams::validate() const {
  if (paths < 1) throw ValidationError("decoupling_residual: paths must be positive");
  if (!(dt > 0.0)) throw ValidationError("decoupling_residual: dt must be positive");
  if (checkpoints < 1) throw ValidationError("decoupling_residual: need at least one checkpoint");
  if (quadrature_nodes < 2) throw ValidationError("decoupling_residual: need at least two quadrature nodes");
  if (workers < 1) throw ValidationError("decoupling_residual: workers must be at least 1");
}

DecouplingReport decoupling_residual(const HMFGProblem& problem, const EquilibriumSolution& solution,
                                     const DecouplingParams& params) {
  params.validate();
  const HamiltonianTriple ham = resolve_hamiltonian(problem);
  const EnsembleFlow& rho = solution.rho_star;
  const Index k = rho.n_types();
  const auto& vtimes = solution.values.front().times;
  const double t0 = vtimes.front();
  const double horizon = vtimes.back() - t0;
  const double grid_dt = vtimes[1] - vtimes[0];
  const auto stride = static_cast<Index>(std::llround(params.dt / grid_dt));
  if (stride < 1 || std::abs(static_cast<double>(stride) * grid_dt - params.dt) > 1e-9 * params.dt) {
    throw ValidationError("decoupling_residual: dt must be a multiple of the value-field time step");
  }
  const Index n_nodes = static_cast<Index>(vtimes.size());
  if ((n_nodes - 1) % stride != 0) throw ValidationError("decoupling_residual: dt must divide the horizon");
  const Index steps = (n_nodes - 1) / stride;
  const double dt = horizon / static_cast<double>(steps);
  const double sqdt = std::sqrt(dt);
  std::vector<Index> checks;
  for (Index c = 0; c < params.checkpoints; ++c) {
    const Index s = std::min(steps - 1, c * steps / params.checkpoints);
    if (checks.empty() || checks.back() != s) checks.push_back(s);
  }
  const QuadratureRule gh = gauss_hermite_normal(params.quadrature_nodes);
  const CounterRng rng(params.seed);
  DecouplingReport rep;
  rep.dt = dt;
  rep.paths = params.paths;
  rep.seed = params.seed;
  for (Index s : checks) rep.checkpoint_times.push_back(vtimes[static_cast<std::size_t>(s * stride)]);
  rep.drift_by_checkpoint = RowMatrix::Zero(k, static_cast<Index>(checks.size()));
  std::vector<double> mart(static_cast<std::size_t>(k), 0.0), term(static_cast<std::size_t>(k), 0.0);

  parallel_for(k, params.workers, [&](Index l) {
    const ValueField& v = solution.values[static_cast<std::size_t>(l)];
    const double theta = v.theta;
    const GridMeasure& g0 = rho.front().grid_measure(l);
    const auto ul = static_cast<std::uint32_t>(l);
    std::vector<double> x(static_cast<std::size_t>(params.paths));
    for (Index j = 0; j < params.paths; ++j) {
      x[static_cast<std::size_t>(j)] = g0.quantile(rng.uniform2(Stream::kQuadrature, ul, 0xFFFFFFFFu, static_cast<std::uint32_t>(j)).first);
    }
    std::size_t next_check = 0;
    for (Index s = 0; s < steps; ++s) {
      const Index node = s * stride;
      const double t = vtimes[static_cast<std::size_t>(node)];
      const MeasureEnsemble& mu = rho.snapshot(node);
      const bool check = next_check < checks.size() && checks[next_check] == s;
      detail::NeumaierSum<double> drift_sum, mart_sum;
      for (Index j = 0; j < params.paths; ++j) {
        const auto js = static_cast<std::size_t>(j);
        const double xj = x[js];
        const double p = v.gradient_hermite(node, xj);
        const double a = ham.feedback(theta, t, xj, p, mu);
        const double b = problem.drift(theta, t, xj, mu, a);
        const double sig = problem.vol(theta, t, xj, mu);
        if (check) {
          const double fhat = ham.hamiltonian(theta, t, xj, p, mu) - ham.hamiltonian_grad(theta, t, xj, p, mu) * p;
          double ey = 0.0;
          Vector y(gh.nodes.size());
          for (Index q = 0; q < gh.nodes.size(); ++q) {
            y[q] = v.value_hermite(node + stride, xj + b * dt + sig * sqdt * gh.nodes[q]);
            ey += gh.weights[q] * y[q];
          }
          drift_sum.add(v.value_hermite(node, xj) - ey - fhat * dt);
          double m2 = 0.0;
          for (Index q = 0; q < gh.nodes.size(); ++q) {
            const double e = y[q] - ey - sig * p * sqdt * gh.nodes[q];
            m2 += gh.weights[q] * e * e;
          }
          mart_sum.add(m2);
        }
        const double z = rng.normal(Stream::kQuadrature, ul, static_cast<std::uint32_t>(s), static_cast<std::uint32_t>(j));
        const double nx = xj + b * dt + sig * sqdt * z;
        if (!std::isfinite(nx)) {
          throw SolverError("decoupling_residual: non-finite path " + std::to_string(j) + " at step " + std::to_string(s + 1));
        }
        x[js] = nx;
      }
      if (check) {
        const auto np = static_cast<double>(params.paths);
        rep.drift_by_checkpoint(l, static_cast<Index>(next_check)) = std::abs(drift_sum.value() / np) / dt;
        mart[static_cast<std::size_t>(l)] = std::max(mart[static_cast<std::size_t>(l)], mart_sum.value() / np / dt);
        ++next_check;
      }
    }
    const MeasureEnsemble& mu_t = rho.back();
    double worst = 0.0;
    for (double xj : x) {
      worst = std::max(worst, std::abs(v.value_hermite(n_nodes - 1, xj) - problem.terminal_cost(theta, xj, mu_t)));
    }
    term[static_cast<std::size_t>(l)] = worst;
  });
  rep.drift_residual = rep.drift_by_checkpoint.maxCoeff();
  rep.martingale_residual = *std::max_element(mart.begin(), mart.end());
  rep.terminal_error = *std::max_element(term.begin(), term.end());
  return rep;
}

EquilibriumSolution riccati_solution(const LQBenchmark& bench, const SolverGrids& grids) {
  if (std::abs(grids.time.t_end() - bench.horizon) > 1e-12 || grids.time.t0() != 0.0) {
    throw ValidationError("riccati_solution: time grid must span [0, T]");
  }
  const RiccatiSolution ric = riccati_oracle(bench, 4 * (grids.time.size() - 1));
  std::vector<ValueField> values;
  for (Index l = 0; l < bench.n_types(); ++l) values.push_back(ric.value_field(l, grids));
  SolveReport report;
  report.converged = true;
  return {make_problem(bench), grids, ric.flow(grids), std::move(values), std::move(report)};
}

namespace {

struct RiccatiNode {
  Vector a;
  Eigen::MatrixXd pi;
  std::vector<Eigen::MatrixXd> q;
  Vector c0;
};

double lq_value(const RiccatiNode& c, Index l, double x, const Vector& m) {
  return -0.5 * c.a[l] * x * x + c.pi.row(l).dot(m) * x + c.c0[l] + m.dot(c.q[static_cast<std::size_t>(l)] * m);
}

MeasureEnsemble atoms_at(const Vector& m) {
  std::vector<Measure> ms;
  for (Index j = 0; j < m.size(); ++j) ms.emplace_back(EmpiricalMeasure({m[j]}, {1.0}, "mean atom"));
  return MeasureEnsemble(std::move(ms));
}

}  // namespace

MasterResidualReport master_residual_lq(const LQBenchmark& bench, const SolverGrids& grids, MasterParams params) {
  bench.validate();
  const Index k = bench.n_types();
  const Index intervals = grids.time.size() - 1;
  if (params.riccati_steps == 0) params.riccati_steps = 8 * intervals;
  if (params.riccati_steps % intervals != 0) {
    throw ValidationError("master_residual_lq: Riccati steps must be a multiple of the time intervals");
  }
  if (std::abs(grids.time.t_end() - bench.horizon) > 1e-12 || grids.time.t0() != 0.0) {
    throw ValidationError("master_residual_lq: time grid must span [0, T]");
  }
  if (!(params.fd_step > 0.0)) throw ValidationError("master_residual_lq: fd_step must be positive");
  const Index stride = params.riccati_steps / intervals;
  const RiccatiSolution ric = riccati_oracle(bench, params.riccati_steps);
  const HMFGProblem problem = make_problem(bench);
  const HamiltonianTriple ham = resolve_hamiltonian(problem);
  const double h = ric.step();
  const auto node = [&ric](Index n) {
    RiccatiNode c;
    c.a = ric.a.row(n).transpose();
    c.pi = ric.pi[static_cast<std::size_t>(n)];
    c.q = ric.q[static_cast<std::size_t>(n)];
    c.c0 = ric.c0.row(n).transpose();
    return c;
  };

  std::vector<Vector> mean_sets;
  std::mt19937_64 gen(params.seed);
  std::uniform_real_distribution<double> unif(-params.mean_range, params.mean_range);
  for (Index r = 0; r < params.random_means; ++r) {
    Vector m(k);
    for (Index j = 0; j < k; ++j) m[j] = unif(gen);
    mean_sets.push_back(m);
  }

  MasterResidualReport rep;
  rep.times = grids.time.times();
  for (Index i = 0; i < grids.space.size(); ++i) rep.x.push_back(grids.space.node(i));
  rep.field.assign(static_cast<std::size_t>(k), RowMatrix::Zero(grids.time.size(), grids.space.size()));
  const Index last = ric.n_nodes() - 1;

  for (Index tn = 0; tn <= intervals; ++tn) {
    const Index n = tn * stride;
    const double t = ric.times[static_cast<std::size_t>(n)];
    const RiccatiNode c = node(n);
    const RiccatiRates rates = riccati_rates(bench, c.a, c.pi, c.q);
    const Eigen::MatrixXd mm = c.pi - Eigen::MatrixXd(c.a.asDiagonal());
    // Neighbours for the time difference.
    const Index n1 = n == 0 ? 0 : (n == last ? last - 2 : n - 1);
    const RiccatiNode cm = node(n1), cc = node(n1 + 1), cp = node(n1 + 2);
    for (std::size_t set = 0; set <= mean_sets.size(); ++set) {
      const bool equilibrium = set == 0;
      const Vector m = equilibrium ? Vector(ric.mean.row(n).transpose()) : mean_sets[set - 1];
      const MeasureEnsemble mu = atoms_at(m);
      const Vector drift_m = mm * m;
      for (Index l = 0; l < k; ++l) {
        const double theta = mu.type_point(l);
        const double s2 = bench.vol[l] * bench.vol[l];
        for (Index i = 0; i < grids.space.size(); ++i) {
          const double x = grids.space.node(i);
          const double p = -c.a[l] * x + c.pi.row(l).dot(m);
          if (std::abs(p) >= bench.action_bound) continue;
          const double hval = ham.hamiltonian(theta, t, x, p, mu);
          const double vxx = -c.a[l];
          // Analytic route.
          const double vt = -0.5 * rates.a[l] * x * x + rates.pi.row(l).dot(m) * x + rates.c0[l] +
                            m.dot(rates.q[static_cast<std::size_t>(l)] * m);
          const Vector dvdm = c.pi.row(l).transpose() * x +
                              (c.q[static_cast<std::size_t>(l)] + c.q[static_cast<std::size_t>(l)].transpose()) * m;
          const double ra = vt + hval + 0.5 * s2 * vxx + dvdm.dot(drift_m);
          // Finite-difference route.
          double vt_fd = 0.0;
          const double vm = lq_value(cm, l, x, m), vc = lq_value(cc, l, x, m), vp = lq_value(cp, l, x, m);
          if (n == 0) {
            vt_fd = (-3.0 * vm + 4.0 * vc - vp) / (2.0 * h);
          } else if (n == last) {
            vt_fd = (vm - 4.0 * vc + 3.0 * vp) / (2.0 * h);
          } else {
            vt_fd = (vp - vm) / (2.0 * h);
          }
          double integral_fd = 0.0;
          for (Index j = 0; j < k; ++j) {
            Vector up = m, dn = m;
            up[j] += params.fd_step;
            dn[j] -= params.fd_step;
            integral_fd += (lq_value(c, l, x, up) - lq_value(c, l, x, dn)) / (2.0 * params.fd_step) * drift_m[j];
          }
          const double rf = vt_fd + hval + 0.5 * s2 * vxx + integral_fd;
          rep.max_analytic = std::max(rep.max_analytic, std::abs(ra));
          rep.max_fd = std::max(rep.max_fd, std::abs(rf));
          rep.max_route_gap = std::max(rep.max_route_gap, std::abs(ra - rf));
          if (equilibrium) rep.field[static_cast<std::size_t>(l)](tn, i) = ra;
          ++rep.samples;
        }
      }
    }
  }
  return rep;
}

}  // namespace hmfg
