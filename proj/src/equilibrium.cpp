#include "hmfg/equilibrium.hpp"

#include <spdlog/spdlog.h>

#include <chrono>
#include <cmath>
#include <limits>

#include "hmfg/errors.hpp"
#include "hmfg/wasserstein.hpp"

namespace hmfg {

void FixedPointConfig::validate() const {
  if (!(tol > 0.0)) throw ValidationError("FixedPointConfig: tol must be positive");
  if (max_iter < 1) throw ValidationError("FixedPointConfig: max_iter must be at least 1");
  if (!(damping > 0.0 && damping <= 1.0)) throw ValidationError("FixedPointConfig: damping must lie in (0, 1]");
  if (delta0_hint && !(*delta0_hint > 0.0)) throw ValidationError("FixedPointConfig: delta0_hint must be positive");
  if (!(guard_bound > 0.0)) throw ValidationError("FixedPointConfig: guard bound must be positive");
  if (!(window_ratio_target > 0.0 && window_ratio_target < 1.0)) {
    throw ValidationError("FixedPointConfig: window ratio target must lie in (0, 1)");
  }
}

double EquilibriumSolution::feedback(Index l, double t, double x) const {
  const ValueField& v = values[static_cast<std::size_t>(l)];
  const double p = v.gradient(t, x);
  const MeasureEnsemble& mu = rho_star.snapshot(rho_star.node_at_or_before(t));
  const HamiltonianTriple ham = resolve_hamiltonian(problem);
  return ham.feedback(v.theta, t, x, p, mu);
}

std::function<double(double, double)> EquilibriumSolution::feedback_fn(Index l) const {
  auto ham = std::make_shared<const HamiltonianTriple>(resolve_hamiltonian(problem));
  auto value = std::make_shared<const ValueField>(values[static_cast<std::size_t>(l)]);
  auto flow = std::make_shared<const EnsembleFlow>(rho_star);
  return [ham, value, flow](double t, double x) {
    const double p = value->gradient(t, x);
    return ham->feedback(value->theta, t, x, p, flow->snapshot(flow->node_at_or_before(t)));
  };
}

double edge_mass(const EnsembleFlow& flow, double fraction) {
  const StateGrid& g = flow.grid();
  const double band = fraction * (g.x_max() - g.x_min());
  double worst = 0.0;
  for (Index n = 0; n < flow.n_times(); ++n) {
    for (Index l = 0; l < flow.n_types(); ++l) {
      const GridMeasure& m = flow.snapshot(n).grid_measure(l);
      const double mass = m.cdf(g.x_min() + band) + (1.0 - m.cdf(g.x_max() - band));
      worst = std::max(worst, mass);
    }
  }
  return worst;
}

namespace {

using Clock = std::chrono::steady_clock;
using PhiFn = std::function<BestResponse(const EnsembleFlow&)>;

struct PicardOutcome {
  EnsembleFlow rho;
  BestResponse image;
  SolveReport report;
};

PicardOutcome picard(const PhiFn& phi, EnsembleFlow rho, const FixedPointConfig& cfg) {
  SolveReport report;
  report.guard = TruncationGuard(cfg.guard_bound);
  std::optional<EnsembleFlow> best_rho;
  std::optional<BestResponse> best_image;
  double best = std::numeric_limits<double>::infinity();
  for (int k = 0; k < cfg.max_iter; ++k) {
    BestResponse br = phi(rho);
    const double r = flow_distance(br.flow, rho, 1);
    if (!std::isfinite(r)) throw SolverError("fixed point: residual is not finite at iteration " + std::to_string(k));
    if (!report.residuals.empty()) report.contraction_ratios.push_back(r / report.residuals.back());
    report.residuals.push_back(r);
    report.iterations = k + 1;
    report.guard.merge(br.guard);
    report.max_renormalization = std::max(report.max_renormalization, br.max_renormalization);
    spdlog::debug("fixed point iteration {}: residual {:.6e}", k, r);
    const bool done = r <= cfg.tol;
    const bool last = done || k + 1 == cfg.max_iter;
    std::optional<EnsembleFlow> next;
    if (!last) next = interpolate(rho, br.flow, cfg.damping);
    if (r < best) {
      best = r;
      best_rho = std::move(rho);
      best_image = std::move(br);
    }
    if (done) report.converged = true;
    if (last) break;
    rho = std::move(*next);
  }
  report.certificate = best;
  return {std::move(*best_rho), std::move(*best_image), std::move(report)};
}

double feedback_slope(const HMFGProblem& problem, const EnsembleFlow& rho, const std::vector<ValueField>& values) {
  const HamiltonianTriple ham = resolve_hamiltonian(problem);
  double worst = 0.0;
  for (const auto& v : values) {
    const StateGrid& g = v.grid;
    for (Index n = 0; n < v.n_times(); ++n) {
      const MeasureEnsemble& mu = rho.snapshot(n);
      double prev = ham.feedback(v.theta, v.times[static_cast<std::size_t>(n)], g.node(0), v.p(n, 0), mu);
      for (Index i = 1; i < g.size(); ++i) {
        const double a = ham.feedback(v.theta, v.times[static_cast<std::size_t>(n)], g.node(i), v.p(n, i), mu);
        worst = std::max(worst, std::abs(a - prev) / g.dx());
        prev = a;
      }
    }
  }
  return worst;
}

EquilibriumSolution finish(const HMFGProblem& problem, const SolverGrids& grids, PicardOutcome out,
                           Clock::time_point start) {
  out.report.edge_mass = edge_mass(out.rho);
  out.report.feedback_lipschitz = feedback_slope(problem, out.rho, out.image.values);
  out.report.wall_time = std::chrono::duration<double>(Clock::now() - start).count();
  if (out.report.guard.violated) {
    spdlog::warn("gradient bound exceeded: max |sigma u_x| = {:.4g} > M = {:.4g} at theta = {}, t = {}, x = {}",
                 out.report.guard.max_observed, out.report.guard.bound, out.report.guard.theta, out.report.guard.t,
                 out.report.guard.x);
  }
  return {problem, grids, std::move(out.rho), std::move(out.image.values), std::move(out.report)};
}

}  // namespace

EquilibriumSolution solve_equilibrium(const HMFGProblem& problem, const MeasureEnsemble& mu0, const SolverGrids& grids,
                                      const FixedPointConfig& config, const EnsembleFlow* initial) {
  config.validate();
  check_problem(problem);
  if (config.split_horizon && initial == nullptr) return solve_split_horizon(problem, mu0, grids, config);
  const auto start = Clock::now();
  if (!mu0.is_grid() || !(mu0.grid() == grids.space)) {
    throw ValidationError("solve_equilibrium: initial law must be a grid ensemble on the solver grid");
  }
  EnsembleFlow rho0 = initial != nullptr ? *initial : EnsembleFlow::frozen(mu0, grids.time.times());
  check_alignment(rho0, grids);
  BestResponseOptions opts;
  opts.workers = config.workers;
  opts.guard_bound = config.guard_bound;
  const PhiFn phi = [&](const EnsembleFlow& rho) { return best_response_flow(problem, rho, mu0, grids, opts); };
  return finish(problem, grids, picard(phi, std::move(rho0), config), start);
}

namespace {

std::vector<Index> window_bounds(Index n_intervals, Index windows) {
  std::vector<Index> b;
  for (Index w = 0; w <= windows; ++w) b.push_back(w * n_intervals / windows);
  return b;
}

double max_steady_ratio(const SolveReport& r) {
  // The first ratio compares against the frozen initial guess and is not representative.
  double m = 0.0;
  for (std::size_t i = 1; i < r.contraction_ratios.size(); ++i) m = std::max(m, r.contraction_ratios[i]);
  if (r.contraction_ratios.size() == 1) m = r.contraction_ratios.front();
  return m;
}

struct SweepOutcome {
  std::optional<PicardOutcome> global;
  double worst_window_ratio = 0.0;
  bool windows_converged = true;
};

SweepOutcome forward_backward(const HMFGProblem& problem, const MeasureEnsemble& mu0, const SolverGrids& grids,
                              const FixedPointConfig& cfg, const std::vector<Index>& bounds) {
  BestResponseOptions opts;
  opts.workers = cfg.workers;
  opts.guard_bound = cfg.guard_bound;
  FixedPointConfig inner = cfg;
  inner.tol = cfg.tol / 10.0;
  SweepOutcome out;
  SolveReport report;
  report.guard = TruncationGuard(cfg.guard_bound);
  report.windows = static_cast<Index>(bounds.size()) - 1;
  EnsembleFlow rho = EnsembleFlow::frozen(mu0, grids.time.times());
  std::optional<EnsembleFlow> best_rho;
  std::optional<BestResponse> best_image;
  double best = std::numeric_limits<double>::infinity();
  for (int sweep = 0; sweep < cfg.max_iter; ++sweep) {
    // Backward sweep: continuation values of every window against the current flow.
    BestResponse global = best_response_flow(problem, rho, mu0, grids, opts);
    const double r = flow_distance(global.flow, rho, 1);
    if (!std::isfinite(r)) throw SolverError("split horizon: residual is not finite at sweep " + std::to_string(sweep));
    if (!report.residuals.empty()) report.contraction_ratios.push_back(r / report.residuals.back());
    report.residuals.push_back(r);
    report.iterations = sweep + 1;
    report.guard.merge(global.guard);
    report.max_renormalization = std::max(report.max_renormalization, global.max_renormalization);
    spdlog::debug("split horizon sweep {}: residual {:.6e}", sweep, r);
    if (r < best) {
      best = r;
      best_rho = rho;
      best_image = global;
    }
    if (r <= cfg.tol) {
      report.converged = true;
      break;
    }
    if (sweep + 1 == cfg.max_iter) break;
    // Forward sweep: local equilibria window by window.
    std::vector<EnsembleFlow> pieces;
    MeasureEnsemble start = mu0;
    double worst = 0.0;
    bool all_converged = true;
    for (std::size_t w = 0; w + 1 < bounds.size(); ++w) {
      const SolverGrids gw{grids.space, grids.time.window(bounds[w], bounds[w + 1])};
      BestResponseOptions local = opts;
      for (const auto& v : global.values) local.terminal.push_back(v.u.row(bounds[w + 1]).transpose());
      const PhiFn phi = [&](const EnsembleFlow& f) { return best_response_flow(problem, f, start, gw, local); };
      EnsembleFlow guess = rho.slice(bounds[w], bounds[w + 1]);
      if (w > 0) {
        std::vector<MeasureEnsemble> snaps;
        for (Index n = 0; n < guess.n_times(); ++n) snaps.push_back(n == 0 ? start : guess.snapshot(n));
        guess = EnsembleFlow(guess.times(), std::move(snaps));
      }
      PicardOutcome piece = picard(phi, std::move(guess), inner);
      worst = std::max(worst, max_steady_ratio(piece.report));
      all_converged = all_converged && piece.report.converged;
      report.guard.merge(piece.report.guard);
      start = piece.image.flow.back();
      pieces.push_back(std::move(piece.image.flow));
    }
    out.worst_window_ratio = std::max(out.worst_window_ratio, worst);
    out.windows_converged = all_converged;
    rho = concatenate(pieces);
  }
  report.certificate = best;
  out.global = PicardOutcome{std::move(*best_rho), std::move(*best_image), std::move(report)};
  return out;
}

}  // namespace

EquilibriumSolution solve_split_horizon(const HMFGProblem& problem, const MeasureEnsemble& mu0,
                                        const SolverGrids& grids, const FixedPointConfig& config) {
  config.validate();
  check_problem(problem);
  FixedPointConfig flat = config;
  flat.split_horizon = false;
  const Index n_intervals = grids.time.size() - 1;
  const double horizon = grids.time.t_end() - grids.time.t0();
  Index windows = 2;
  bool adaptive = true;
  if (config.delta0_hint) {
    windows = static_cast<Index>(std::ceil(horizon / *config.delta0_hint - 1e-12));
    adaptive = false;
    if (windows <= 1) return solve_equilibrium(problem, mu0, grids, flat);
  }
  const auto start = Clock::now();
  if (!mu0.is_grid() || !(mu0.grid() == grids.space)) {
    throw ValidationError("solve_split_horizon: initial law must be a grid ensemble on the solver grid");
  }
  for (;;) {
    if (windows > n_intervals) throw SolverError("no contracting window");
    spdlog::info("split horizon: {} windows", windows);
    SweepOutcome out = forward_backward(problem, mu0, grids, flat, window_bounds(n_intervals, windows));
    const bool contracting = out.windows_converged && out.worst_window_ratio < config.window_ratio_target;
    if (!adaptive || out.global->report.converged || contracting) {
      if (!out.global->report.converged) spdlog::warn("split horizon: sweeps did not reach tol with {} windows", windows);
      return finish(problem, grids, std::move(*out.global), start);
    }
    windows *= 2;
  }
}

double estimate_contraction(const HMFGProblem& problem, const EnsembleFlow& rho1, const EnsembleFlow& rho2,
                            const SolverGrids& grids, int workers) {
  const double d = flow_distance(rho1, rho2, 1);
  if (d == 0.0) throw ValidationError("estimate_contraction: identical inputs");
  BestResponseOptions opts;
  opts.workers = workers;
  const MeasureEnsemble& mu0 = rho1.front();
  const BestResponse a = best_response_flow(problem, rho1, mu0, grids, opts);
  const BestResponse b = best_response_flow(problem, rho2, mu0, grids, opts);
  return flow_distance(a.flow, b.flow, 1) / d;
}

}  // namespace hmfg
