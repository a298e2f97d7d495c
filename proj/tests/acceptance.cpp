// Acceptance run: one PASS/FAIL line per criterion, exit status 0 iff all pass.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numbers>
#include <random>
#include <sstream>
#include <string>

#include "commands.hpp"
#include "fixtures.hpp"
#include "hmfg/hjb_fp.hpp"
#include "hmfg/mfcalculus.hpp"
#include "hmfg/nplayer.hpp"
#include "hmfg/wasserstein.hpp"
#include "oracles.hpp"

using namespace hmfg;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool ok = true;
  std::ostringstream detail;

  void require(bool cond, const std::string& what) {
    ok = ok && cond;
    if (!cond) detail << " [failed: " << what << "]";
  }
};

std::string sci(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

const SolverGrids& reference_grids() {
  static const SolverGrids g{StateGrid(-6.0, 6.0, 401), TimeGrid(0.0, lq_k4().horizon, 400)};
  return g;
}

const EquilibriumSolution& reference_solution() {
  static const EquilibriumSolution sol = [] {
    const auto bench = lq_k4();
    const auto& g = reference_grids();
    return solve_equilibrium(make_problem(bench), initial_ensemble(bench, g.space), g, FixedPointConfig{});
  }();
  return sol;
}

// 1. Metric axioms on random triples and W1/W2 against the transport LP.
void metric_suite(Outcome& out) {
  std::mt19937_64 gen(101);
  std::uniform_int_distribution<int> atoms(1, 5), types(1, 8);
  std::uniform_real_distribution<double> pos(-3.0, 3.0), mass(0.05, 1.0);
  auto draw = [&] {
    std::vector<double> x, w;
    const int n = atoms(gen);
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
      x.push_back(pos(gen));
      w.push_back(mass(gen));
      total += w.back();
    }
    for (double& v : w) v /= total;
    return std::pair{x, w};
  };
  double lp_err = 0.0;
  for (int trial = 0; trial < 500; ++trial) {
    const auto [xa, wa] = draw();
    const auto [xb, wb] = draw();
    const EmpiricalMeasure a(xa, wa), b(xb, wb);
    lp_err = std::max(lp_err, std::abs(wasserstein1(a, b) - oracle::w1(xa, wa, xb, wb)));
    lp_err = std::max(lp_err, std::abs(wasserstein2(a, b) - oracle::w2(xa, wa, xb, wb)));
  }
  const StateGrid grid(-6.0, 6.0, 241);
  std::uniform_real_distribution<double> mean(-2.0, 2.0), sd(0.3, 1.2);
  double worst_triangle = -1.0, worst_symmetry = 0.0, worst_identity = 0.0;
  bool nonnegative = true;
  for (int trial = 0; trial < 100; ++trial) {
    const int k = types(gen);
    auto ensemble = [&] {
      std::vector<Measure> ms;
      for (int l = 0; l < k; ++l) {
        if (trial % 2 == 0) {
          ms.emplace_back(GridMeasure::gaussian(grid, mean(gen), sd(gen)));
        } else {
          const auto [x, w] = draw();
          ms.emplace_back(EmpiricalMeasure(x, w));
        }
      }
      return MeasureEnsemble(ms);
    };
    const auto a = ensemble(), b = ensemble(), c = ensemble();
    for (int p : {1, 2}) {
      const double ab = ensemble_distance(a, b, p);
      nonnegative = nonnegative && ab >= 0.0;
      worst_identity = std::max(worst_identity, ensemble_distance(a, a, p));
      worst_symmetry = std::max(worst_symmetry, std::abs(ab - ensemble_distance(b, a, p)));
      worst_triangle = std::max(worst_triangle, ensemble_distance(a, c, p) - ab - ensemble_distance(b, c, p));
    }
  }
  out.require(lp_err <= 1e-9, "LP agreement");
  out.require(nonnegative && worst_identity == 0.0, "identity/nonnegativity");
  out.require(worst_symmetry <= 1e-12, "symmetry");
  out.require(worst_triangle <= 1e-12, "triangle inequality");
  out.detail << "max |W - LP| = " << sci(lp_err) << " (<= 1e-9); triangle excess " << sci(worst_triangle)
             << "; symmetry gap " << sci(worst_symmetry);
}

// 2. Heat closed forms, Fokker-Planck mass, first-order refinement.
void pde_kernels(Outcome& out) {
  const double pi = std::numbers::pi;
  auto frozen = [](const SolverGrids& g) {
    return EnsembleFlow::frozen(MeasureEnsemble({GridMeasure::gaussian(g.space, 0.0, 1.0)}), g.time.times());
  };
  // Quadratic terminal data: u = x^2 + (T - t) at the grid centre.
  const double horizon = 0.5;
  const SolverGrids gq{StateGrid(-6.0, 6.0, 401), TimeGrid(0.0, horizon, 101)};
  const auto quad = fixtures::constant_feedback_problem(0.0, 1.0, [](double x) { return x * x; }, horizon);
  const auto vq = solve_hjb(quad, 1.0, frozen(gq), gq);
  double err_quad = 0.0;
  for (Index n = 0; n < vq.n_times(); ++n) {
    for (Index i = 0; i < gq.space.size(); ++i) {
      const double x = gq.space.node(i);
      if (std::abs(x) <= 2.0) {
        err_quad = std::max(err_quad, std::abs(vq.u(n, i) - (x * x + horizon - vq.times[static_cast<std::size_t>(n)])));
      }
    }
  }
  // Linear terminal data away from the Neumann layer.
  const SolverGrids gl{StateGrid(-10.0, 10.0, 401), TimeGrid(0.0, horizon, 101)};
  const auto lin = fixtures::constant_feedback_problem(0.0, 1.0, [](double x) { return x; }, horizon);
  const auto vl = solve_hjb(lin, 1.0, frozen(gl), gl);
  double err_lin = 0.0;
  for (Index n = 0; n < vl.n_times(); ++n) {
    for (Index i = 0; i < gl.space.size(); ++i) {
      if (std::abs(gl.space.node(i)) <= 4.0) err_lin = std::max(err_lin, std::abs(vl.u(n, i) - gl.space.node(i)));
    }
  }
  // u = cos(x) exp(-(T - t)/2) on [-2 pi, 2 pi], where the Neumann condition is exact.
  std::vector<double> errs;
  for (Index level = 0; level < 3; ++level) {
    const SolverGrids g{StateGrid(-2 * pi, 2 * pi, 100 * (Index{1} << level) + 1),
                        TimeGrid(0.0, horizon, 25 * (Index{1} << level) + 1)};
    const auto pr = fixtures::constant_feedback_problem(0.0, 1.0, [](double x) { return std::cos(x); }, horizon);
    const auto v = solve_hjb(pr, 1.0, frozen(g), g);
    double e = 0.0;
    for (Index n = 0; n < v.n_times(); ++n) {
      const double decay = std::exp(-(horizon - v.times[static_cast<std::size_t>(n)]) / 2.0);
      for (Index i = 0; i < g.space.size(); ++i) e = std::max(e, std::abs(v.u(n, i) - std::cos(g.space.node(i)) * decay));
    }
    errs.push_back(e);
  }
  const double f1 = errs[0] / errs[1], f2 = errs[1] / errs[2];
  // Mass of every type at every step of the LQ best response at reference resolution.
  const auto bench = lq_k4();
  const auto& g = reference_grids();
  const auto mu0 = initial_ensemble(bench, g.space);
  const auto br = best_response_flow(make_problem(bench), EnsembleFlow::frozen(mu0, g.time.times()), mu0, g);
  double mass_err = 0.0;
  for (Index n = 0; n < g.time.size(); ++n) {
    for (Index l = 0; l < 4; ++l) mass_err = std::max(mass_err, std::abs(trapezoid(g.space, br.flow.density(n, l)) - 1.0));
  }
  out.require(err_quad <= 1e-3, "quadratic heat");
  out.require(err_lin <= 1e-10, "linear heat");
  out.require(mass_err <= 1e-8, "mass");
  out.require(f1 >= 1.7 && f2 >= 1.7, "refinement factor");
  out.detail << "quadratic err " << sci(err_quad) << " (<= 1e-3); linear err " << sci(err_lin) << "; mass err "
             << sci(mass_err) << " (<= 1e-8); refinement factors " << sci(f1) << ", " << sci(f2) << " (>= 1.7)";
}

// 3. Coupled LQ equilibrium against the Riccati oracle.
void equilibrium_vs_oracle(Outcome& out) {
  const auto bench = lq_k4();
  const auto& g = reference_grids();
  const auto& sol = reference_solution();
  const auto ric = riccati_oracle(bench, 4 * (g.time.size() - 1));
  const double d1 = flow_distance(sol.rho_star, ric.flow(g), 1);
  double verr = 0.0;
  for (Index l = 0; l < 4; ++l) {
    const auto exact = ric.value_field(l, g);
    for (Index n = 0; n < g.time.size(); ++n) {
      for (Index i = 0; i < g.space.size(); ++i) {
        if (std::abs(g.space.node(i)) <= 4.0) {
          verr = std::max(verr, std::abs(sol.values[static_cast<std::size_t>(l)].u(n, i) - exact.u(n, i)));
        }
      }
    }
  }
  out.require(sol.report.converged, "converged");
  out.require(d1 <= 1e-2, "flow distance");
  out.require(verr <= 5e-3, "value error");
  out.detail << "d1 = " << sci(d1) << " (<= 1e-2); max value err on |x| <= 4 = " << sci(verr) << " (<= 5e-3); "
             << sol.report.iterations << " iterations";
}

double median_ratio(const SolveReport& r) {
  std::vector<double> v(r.contraction_ratios.begin() + (r.contraction_ratios.size() > 1 ? 1 : 0),
                        r.contraction_ratios.end());
  std::sort(v.begin(), v.end());
  return v.empty() ? 0.0 : v[v.size() / 2];
}

// 4. Picard contraction at short horizon and its trend in T.
void contraction(Outcome& out) {
  FixedPointConfig cfg;
  cfg.damping = 1.0;
  cfg.tol = 1e-8;
  cfg.max_iter = 25;
  std::vector<double> medians;
  for (double horizon : {0.4, 0.2, 0.1}) {
    auto bench = lq_k4();
    bench.horizon = horizon;
    const SolverGrids g{StateGrid(-6.0, 6.0, 401), TimeGrid(0.0, horizon, static_cast<Index>(std::lround(horizon * 800)) + 1)};
    const auto sol = solve_equilibrium(make_problem(bench), initial_ensemble(bench, g.space), g, cfg);
    medians.push_back(median_ratio(sol.report));
    if (horizon == 0.1) {
      const double worst = *std::max_element(sol.report.contraction_ratios.begin(), sol.report.contraction_ratios.end());
      out.require(sol.report.converged, "T = 0.1 converges to 1e-8 within 25 iterations");
      out.require(worst < 1.0, "all ratios below one");
      out.detail << "T = 0.1: " << sol.report.iterations << " iterations, max ratio " << sci(worst) << "; ";
    }
  }
  out.require(medians[0] > medians[1] && medians[1] > medians[2], "ratio decreases with T");
  out.detail << "median ratio at T = 0.4, 0.2, 0.1: " << sci(medians[0]) << ", " << sci(medians[1]) << ", "
             << sci(medians[2]);
}

// 5. Five random initial flows reach the same equilibrium.
void uniqueness(Outcome& out) {
  auto bench = lq_k4();
  bench.horizon = 0.1;
  const SolverGrids g{StateGrid(-6.0, 6.0, 401), TimeGrid(0.0, bench.horizon, 81)};
  const auto pr = make_problem(bench);
  const auto mu0 = initial_ensemble(bench, g.space);
  FixedPointConfig cfg;
  cfg.damping = 1.0;
  cfg.tol = 1e-8;
  std::mt19937_64 gen(55);
  std::uniform_real_distribution<double> mean(-2.0, 2.0), sd(0.3, 1.0);
  std::vector<EnsembleFlow> flows;
  bool converged = true;
  for (int r = 0; r < 5; ++r) {
    std::vector<Measure> ms;
    for (int l = 0; l < 4; ++l) ms.emplace_back(GridMeasure::gaussian(g.space, mean(gen), sd(gen)));
    std::vector<MeasureEnsemble> snaps(static_cast<std::size_t>(g.time.size()), MeasureEnsemble(ms));
    snaps.front() = mu0;
    const EnsembleFlow init(g.time.times(), snaps);
    const auto sol = solve_equilibrium(pr, mu0, g, cfg, &init);
    converged = converged && sol.report.converged;
    flows.push_back(sol.rho_star);
  }
  double worst = 0.0;
  for (std::size_t a = 0; a < flows.size(); ++a) {
    for (std::size_t b = a + 1; b < flows.size(); ++b) worst = std::max(worst, flow_distance(flows[a], flows[b], 1));
  }
  out.require(converged, "all runs converge");
  out.require(worst <= 10 * cfg.tol, "pairwise distance");
  out.detail << "max pairwise d1 = " << sci(worst) << " (<= " << sci(10 * cfg.tol) << ")";
}

// 6 and 7 share the ladder.
struct Ladder {
  std::vector<ChaosReport> chaos;
  std::vector<ExploitabilityReport> exploit;
};

const Ladder& ladder() {
  static const Ladder lad = [] {
    Ladder l;
    const auto& sol = reference_solution();
    for (Index n : {40, 160, 640}) {
      auto c = NPlayerConfig::balanced(n, 4, 0.01, 20, derive_seed(2024, "nplayer"));
      c.workers = default_workers();
      l.chaos.push_back(run_chaos(sol.problem, sol, c));
      l.exploit.push_back(exploitability(sol.problem, sol, c, 0));
    }
    return l;
  }();
  return lad;
}

void chaos(Outcome& out) {
  const auto& lad = ladder();
  for (std::size_t j = 0; j < lad.chaos.size(); ++j) {
    const auto& r = lad.chaos[j];
    out.detail << "N = " << r.n_players << ": " << sci(r.statistic) << " +- " << sci(r.ci_half_width) << "; ";
    if (j > 0) {
      const auto& p = lad.chaos[j - 1];
      out.require(r.statistic + r.ci_half_width < p.statistic - p.ci_half_width, "CI-separated decrease");
    }
  }
  out.detail << lad.chaos.front().replications << " replications";
}

void epsilon_nash(Outcome& out) {
  const auto& lad = ladder();
  for (std::size_t j = 0; j < lad.exploit.size(); ++j) {
    out.detail << "eps(N = " << lad.chaos[j].n_players << ") = " << sci(lad.exploit[j].eps_hat) << "; ";
    if (j > 0) out.require(lad.exploit[j].eps_hat <= lad.exploit[j - 1].eps_hat, "non-increasing eps");
  }
  const auto& sol = reference_solution();
  const auto c = NPlayerConfig::balanced(40, 4, 0.01, 20, derive_seed(2024, "nplayer"));
  const auto same = exploitability_of(sol.problem, sol, c, 0, lift_strategy(sol, c)[0]);
  out.require(same.j_dev == same.j_eq && same.eps_hat == 0.0, "equilibrium deviation exactly 0");
  const auto bench = lq_decoupled();
  const auto& g = reference_grids();
  const auto dec = solve_equilibrium(make_problem(bench), initial_ensemble(bench, g.space), g, FixedPointConfig{});
  const auto rd = exploitability(dec.problem, dec, c, 0);
  out.require(std::abs(rd.gain_mean) <= rd.gain_ci_half_width, "decoupled CI contains 0");
  out.detail << "eq-vs-eq gain " << sci(same.j_dev - same.j_eq) << "; decoupled gain " << sci(rd.gain_mean) << " +- "
             << sci(rd.gain_ci_half_width);
}

// 8. Ito formula on the built-in functionals.
void ito(Outcome& out) {
  ItoParams params;
  params.particles = 100000;
  params.dt = 1e-3;
  params.workers = default_workers();
  std::vector<std::uint64_t> seeds;
  for (std::uint64_t s = 0; s < 10; ++s) seeds.push_back(derive_seed(2024, "ito", s));
  for (const auto& c : builtin_ito_cases(StateGrid(-8.0, 8.0, 801))) {
    const auto s = run_ito_case(c, params, seeds);
    out.require(s.passed && !s.inconclusive, c.name + " within 3 SE");
    out.detail << c.name << ": |lhs - rhs| = " << sci(std::abs(s.diff)) << " vs 3 SE " << sci(3 * s.combined_se) << "; ";
    if (c.name == "linear-drift") {
      double ss = 0.0;
      for (const auto& r : s.runs) ss += (r.lhs - s.lhs_mean) * (r.lhs - s.lhs_mean);
      const double se = std::sqrt(ss / (static_cast<double>(s.runs.size()) - 1.0) / static_cast<double>(s.runs.size()));
      out.require(std::abs(s.lhs_mean - s.exact) <= 3 * se, "linear drift equals T");
      out.detail << "|lhs - T| = " << sci(std::abs(s.lhs_mean - s.exact)) << " vs 3 SE " << sci(3 * se) << "; ";
    }
  }
}

// 9. BSDE drift residual under dt halving, using the Riccati-assembled equilibrium.
void decoupling(Outcome& out) {
  const auto bench = lq_k4();
  const SolverGrids g{StateGrid(-6.0, 6.0, 401), TimeGrid(0.0, bench.horizon, 501)};
  const auto sol = riccati_solution(bench, g);
  std::vector<double> res;
  double terminal = 0.0;
  for (double dt : {4e-3, 2e-3, 1e-3}) {
    DecouplingParams dp;
    dp.dt = dt;
    dp.paths = 20000;
    dp.seed = derive_seed(2024, "decoupling");
    dp.workers = default_workers();
    const auto r = decoupling_residual(sol.problem, sol, dp);
    res.push_back(r.drift_residual);
    terminal = std::max(terminal, r.terminal_error);
  }
  const double f1 = res[0] / res[1], f2 = res[1] / res[2];
  out.require(f1 >= 1.6 && f1 <= 2.4 && f2 >= 1.6 && f2 <= 2.4, "halving factors");
  out.require(terminal <= 1e-3, "terminal condition");
  out.detail << "drift residuals " << sci(res[0]) << ", " << sci(res[1]) << ", " << sci(res[2]) << "; factors "
             << sci(f1) << ", " << sci(f2) << " (in [1.6, 2.4]); terminal err " << sci(terminal);
}

// 10. Master-equation residual of the LQ decoupling field.
void master(Outcome& out) {
  const auto& g = reference_grids();
  const auto coupled = master_residual_lq(lq_k4(), g);
  const auto decoupled = master_residual_lq(lq_decoupled(), g);
  out.require(coupled.max_analytic <= 1e-6, "coupled analytic");
  out.require(coupled.max_fd <= 1e-3, "coupled finite difference");
  out.require(decoupled.max_analytic <= 1e-8, "decoupled");
  out.detail << "coupled " << sci(coupled.max_analytic) << " (<= 1e-6), finite-difference route " << sci(coupled.max_fd)
             << " (<= 1e-3); decoupled " << sci(decoupled.max_analytic) << " (<= 1e-8)";
}

// 11. CLI outputs are byte-identical across worker counts.
std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "hmfg");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  return cli::run(static_cast<int>(argv.size()), argv.data());
}

void determinism(Outcome& out) {
  const fs::path root = fs::temp_directory_path() / "hmfg-acceptance-determinism";
  fs::remove_all(root);
  for (const char* workers : {"1", "3"}) {
    const std::string dir = (root / workers).string();
    const std::vector<std::string> common = {"--builtin", "lq-k4", "-o", dir, "--seed", "2024", "--workers", workers,
                                             "--log-level", "warn"};
    auto with = [&](std::vector<std::string> head, std::vector<std::string> tail = {}) {
      head.insert(head.end(), common.begin(), common.end());
      head.insert(head.end(), tail.begin(), tail.end());
      return head;
    };
    out.require(run_cli(with({"solve"})) == 0, std::string("solve with ") + workers + " workers");
    out.require(run_cli(with({"chaos"})) == 0, "chaos");
    out.require(run_cli(with({"simulate"}, {"--paths", "4"})) == 0, "simulate");
    out.require(run_cli(with({"validate"}, {"--all", "--particles", "20000", "--seeds", "3"})) == 0, "validate --all");
  }
  Index compared = 0, differing = 0;
  for (const auto& entry : fs::directory_iterator(root / "1")) {
    const auto name = entry.path().filename();
    if (name == "manifest.json") continue;
    ++compared;
    if (!fs::exists(root / "3" / name) || slurp(entry.path()) != slurp(root / "3" / name)) {
      ++differing;
      out.detail << "differs: " << name.string() << "; ";
    }
  }
  out.require(differing == 0 && compared > 0, "identical outputs");
  out.detail << compared << " CSV/JSON files compared between 1 and 3 workers, " << differing << " differ";
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    const char* name;
    double budget_s;
    std::function<void(Outcome&)> run;
  };
  const std::vector<Criterion> criteria = {
      {1, "metric suite", 10, metric_suite},
      {2, "PDE kernels", 30, pde_kernels},
      {3, "equilibrium vs Riccati oracle", 300, equilibrium_vs_oracle},
      {4, "contraction", 300, contraction},
      {5, "uniqueness probe", 600, uniqueness},
      {6, "propagation of chaos", 900, chaos},
      {7, "epsilon-Nash", 900, epsilon_nash},
      {8, "Ito formula", 300, ito},
      {9, "decoupling field", 300, decoupling},
      {10, "master residual", 60, master},
      {11, "determinism", 0, determinism},
  };
  bool all = true;
  for (const auto& c : criteria) {
    Outcome out;
    const auto start = std::chrono::steady_clock::now();
    try {
      c.run(out);
    } catch (const std::exception& e) {
      out.ok = false;
      out.detail << " [exception: " << e.what() << "]";
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (c.budget_s > 0 && secs > c.budget_s) {
      out.ok = false;
      out.detail << " [over the " << c.budget_s << " s budget]";
    }
    all = all && out.ok;
    std::printf("criterion %2d %s: %s (%.1f s) %s\n", c.id, out.ok ? "PASS" : "FAIL", c.name, secs,
                out.detail.str().c_str());
    std::fflush(stdout);
  }
  return all ? 0 : 1;
}
