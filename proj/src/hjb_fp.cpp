#include "hmfg/hjb_fp.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "hmfg/errors.hpp"
#include "hmfg/numerics.hpp"
#include "hmfg/parallel.hpp"

namespace hmfg {

void check_alignment(const EnsembleFlow& flow, const SolverGrids& grids) {
  const TimeGrid& tg = grids.time;
  if (flow.n_times() != tg.size()) {
    throw ValidationError("flow has " + std::to_string(flow.n_times()) + " time nodes, solver grid has " +
                          std::to_string(tg.size()));
  }
  for (Index n = 0; n < tg.size(); ++n) {
    if (std::abs(flow.time(n) - tg.time(n)) > 1e-12 * std::max(1.0, std::abs(tg.time(n)))) {
      throw ValidationError("flow time node " + std::to_string(n) + " does not match the solver grid");
    }
  }
}

ValueField solve_hjb(const HMFGProblem& problem, double theta, const EnsembleFlow& rho_bar, const SolverGrids& grids,
                     const HjbOptions& options) {
  check_alignment(rho_bar, grids);
  const HamiltonianTriple ham = resolve_hamiltonian(problem);
  const StateGrid& g = grids.space;
  const Index nx = g.size();
  const Index nt = grids.time.size();
  const double h = g.dx();
  const double dt = grids.time.dt();

  ValueField vf{theta, g, grids.time.times(), RowMatrix(nt, nx), RowMatrix(nt, nx)};
  Vector u(nx);
  if (options.terminal != nullptr) {
    if (options.terminal->size() != nx) throw ValidationError("solve_hjb: terminal data has the wrong size");
    u = *options.terminal;
  } else {
    const MeasureEnsemble& mu_t = rho_bar.back();
    for (Index i = 0; i < nx; ++i) u[i] = problem.terminal_cost(theta, g.node(i), mu_t);
  }
  if (!u.allFinite()) throw SolverError("solve_hjb: terminal data is not finite");

  Vector sigma(nx);
  auto record = [&](Index n, const Vector& values) {
    vf.u.row(n) = values.transpose();
    const Vector p = centered_gradient(g, values);
    vf.p.row(n) = p.transpose();
    const MeasureEnsemble& mu = rho_bar.snapshot(n);
    for (Index i = 0; i < nx; ++i) sigma[i] = problem.vol(theta, grids.time.time(n), g.node(i), mu);
    if (options.guard != nullptr) {
      for (Index i = 0; i < nx; ++i) options.guard->observe(sigma[i] * p[i], theta, grids.time.time(n), g.node(i));
    }
  };
  record(nt - 1, u);

  Vector lower(nx), diag(nx), upper(nx), rhs(nx);
  for (Index n = nt - 2; n >= 0; --n) {
    const double t_next = grids.time.time(n + 1);
    const MeasureEnsemble& mu_next = rho_bar.snapshot(n + 1);
    // Explicit Hamiltonian at the previous gradient, with sigma taken at t_{n+1}.
    Vector sigma_next = sigma;
    for (Index i = 0; i < nx; ++i) {
      const double x = g.node(i);
      double p;
      if (i == 0) {
        p = (u[1] - u[0]) / h;
      } else if (i + 1 == nx) {
        p = (u[nx - 1] - u[nx - 2]) / h;
      } else {
        p = (u[i + 1] - u[i - 1]) / (2.0 * h);
        const double drift = ham.hamiltonian_grad(theta, t_next, x, p, mu_next);
        if (std::abs(drift) * h > sigma_next[i] * sigma_next[i]) {
          p = drift > 0.0 ? (u[i + 1] - u[i]) / h : (u[i] - u[i - 1]) / h;
        }
      }
      rhs[i] = u[i] + dt * ham.hamiltonian(theta, t_next, x, p, mu_next);
    }
    const MeasureEnsemble& mu_n = rho_bar.snapshot(n);
    const double t_n = grids.time.time(n);
    for (Index i = 0; i < nx; ++i) {
      const double s = problem.vol(theta, t_n, g.node(i), mu_n);
      const double r = dt * 0.5 * s * s / (h * h);
      diag[i] = 1.0 + 2.0 * r;
      lower[i] = i == 0 ? 0.0 : (i + 1 == nx ? -2.0 * r : -r);
      upper[i] = i + 1 == nx ? 0.0 : (i == 0 ? -2.0 * r : -r);
    }
    try {
      u = detail::solve_tridiagonal<double>(lower, diag, upper, rhs);
    } catch (const std::runtime_error& e) {
      throw SolverError("solve_hjb: step " + std::to_string(n) + ": " + e.what());
    }
    if (!u.allFinite()) {
      throw SolverError("solve_hjb: non-finite value at step " + std::to_string(n) + " (t = " +
                        std::to_string(t_n) + ")");
    }
    record(n, u);
  }
  return vf;
}

DensityFlow solve_fp(const HMFGProblem& problem, double theta, const ValueField& value, const EnsembleFlow& rho_bar,
                     const GridMeasure& mu0, const SolverGrids& grids) {
  check_alignment(rho_bar, grids);
  const StateGrid& g = grids.space;
  if (!(mu0.grid() == g) || !(value.grid == g)) throw ValidationError("solve_fp: grids do not match");
  if (value.n_times() != grids.time.size()) throw ValidationError("solve_fp: value field has the wrong time grid");
  const HamiltonianTriple ham = resolve_hamiltonian(problem);
  const Index nx = g.size();
  const Index nt = grids.time.size();
  const double h = g.dx();
  const double dt = grids.time.dt();

  DensityFlow out;
  out.density.resize(nt, nx);
  Vector rho = mu0.density();
  out.density.row(0) = rho.transpose();

  Vector vol(nx), diff(nx), vel(nx), alpha(nx), beta(nx);
  Vector lower(nx), diag(nx), upper(nx), rhs(nx);
  for (Index n = 0; n + 1 < nt; ++n) {
    const double t = grids.time.time(n + 1);
    const MeasureEnsemble& mu = rho_bar.snapshot(n + 1);
    for (Index i = 0; i < nx; ++i) {
      const double x = g.node(i);
      const double s = problem.vol(theta, t, x, mu);
      diff[i] = 0.5 * s * s;
      vel[i] = ham.hamiltonian_grad(theta, t, x, value.p(n + 1, i), mu);
      vol[i] = (i == 0 || i + 1 == nx) ? 0.5 * h : h;
    }
    // Face flux J_{i+1/2} = alpha_i rho_i + beta_i rho_{i+1}.
    for (Index i = 0; i + 1 < nx; ++i) {
      const double vf = 0.5 * (vel[i] + vel[i + 1]);
      const double dl = diff[i] / h;
      const double dr = diff[i + 1] / h;
      if (std::abs(vf) * h <= 2.0 * std::min(diff[i], diff[i + 1])) {
        alpha[i] = 0.5 * vf + dl;
        beta[i] = 0.5 * vf - dr;
      } else if (vf > 0.0) {
        alpha[i] = vf + dl;
        beta[i] = -dr;
      } else {
        alpha[i] = dl;
        beta[i] = vf - dr;
      }
    }
    for (Index i = 0; i < nx; ++i) {
      diag[i] = vol[i] / dt;
      lower[i] = 0.0;
      upper[i] = 0.0;
      if (i + 1 < nx) {
        diag[i] += alpha[i];
        upper[i] = beta[i];
      }
      if (i > 0) {
        diag[i] -= beta[i - 1];
        lower[i] = -alpha[i - 1];
      }
      rhs[i] = vol[i] / dt * rho[i];
    }
    try {
      rho = detail::solve_tridiagonal<double>(lower, diag, upper, rhs);
    } catch (const std::runtime_error& e) {
      throw SolverError("solve_fp: step " + std::to_string(n) + ": " + e.what());
    }
    bool clipped = false;
    for (Index i = 0; i < nx; ++i) {
      if (!std::isfinite(rho[i])) throw SolverError("solve_fp: non-finite density at step " + std::to_string(n + 1));
      if (rho[i] < 0.0) {
        if (rho[i] < -1e-12) {
          std::ostringstream os;
          os << "solve_fp: negative density " << rho[i] << " at step " << n + 1 << ", node " << i;
          throw SolverError(os.str());
        }
        rho[i] = 0.0;
        clipped = true;
      }
    }
    if (clipped) ++out.clipped_steps;
    const double mass = trapezoid(g, rho);
    const double drift = std::abs(mass - 1.0);
    out.max_renormalization = std::max(out.max_renormalization, drift);
    if (drift > 1e-9) spdlog::debug("solve_fp: renormalization drift {:.3e} at step {}", drift, n + 1);
    rho /= mass;
    out.density.row(n + 1) = rho.transpose();
  }
  return out;
}

BestResponse best_response_flow(const HMFGProblem& problem, const EnsembleFlow& rho_bar, const MeasureEnsemble& mu0,
                                const SolverGrids& grids, const BestResponseOptions& options) {
  const Index k = mu0.n_types();
  if (rho_bar.n_types() != k) throw ValidationError("best_response_flow: flow and initial law differ in K");
  if (!options.terminal.empty() && static_cast<Index>(options.terminal.size()) != k) {
    throw ValidationError("best_response_flow: terminal data must be given for every type");
  }
  check_alignment(rho_bar, grids);
  std::vector<std::optional<ValueField>> slots(static_cast<std::size_t>(k));
  std::vector<RowMatrix> densities(static_cast<std::size_t>(k));
  std::vector<TruncationGuard> guards(static_cast<std::size_t>(k), TruncationGuard(options.guard_bound));
  std::vector<double> renorm(static_cast<std::size_t>(k), 0.0);
  parallel_for(k, options.workers, [&](Index l) {
    const auto li = static_cast<std::size_t>(l);
    const double theta = mu0.type_point(l);
    try {
      HjbOptions ho;
      ho.guard = &guards[li];
      if (!options.terminal.empty()) ho.terminal = &options.terminal[li];
      slots[li] = solve_hjb(problem, theta, rho_bar, grids, ho);
      DensityFlow fp = solve_fp(problem, theta, *slots[li], rho_bar, mu0.grid_measure(l), grids);
      densities[li] = std::move(fp.density);
      renorm[li] = fp.max_renormalization;
    } catch (const SolverError& e) {
      throw SolverError("type " + std::to_string(l) + ": " + e.what());
    }
  });
  std::vector<ValueField> values;
  values.reserve(slots.size());
  for (auto& v : slots) values.push_back(std::move(*v));
  TruncationGuard guard(options.guard_bound);
  double max_renorm = 0.0;
  for (Index l = 0; l < k; ++l) {
    guard.merge(guards[static_cast<std::size_t>(l)]);
    max_renorm = std::max(max_renorm, renorm[static_cast<std::size_t>(l)]);
  }
  EnsembleFlow flow = EnsembleFlow::from_densities(grids.space, grids.time.times(), mu0.type_points(), densities);
  return {std::move(flow), std::move(values), guard, max_renorm};
}

}  // namespace hmfg
