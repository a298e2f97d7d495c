#include <cmath>
#include <random>

#include "doctest.h"
#include "hmfg/equilibrium.hpp"
#include "hmfg/errors.hpp"
#include "hmfg/lq.hpp"
#include "hmfg/wasserstein.hpp"

using namespace hmfg;

namespace {

SolverGrids grids_for(const LQBenchmark& bench, Index n_x, Index n_t, double half_width = 6.0) {
  return {StateGrid(-half_width, half_width, n_x), TimeGrid(0.0, bench.horizon, n_t)};
}

EnsembleFlow random_flow(std::mt19937_64& gen, const StateGrid& grid, const std::vector<double>& times) {
  std::uniform_real_distribution<double> mean(-1.5, 1.5), sd(0.3, 0.9);
  std::vector<Measure> ms;
  for (int l = 0; l < 4; ++l) ms.emplace_back(GridMeasure::gaussian(grid, mean(gen), sd(gen)));
  return EnsembleFlow::frozen(MeasureEnsemble(ms), times);
}

}  // namespace

TEST_CASE("measure-independent problem converges after one update") {
  const auto bench = lq_decoupled();
  const auto g = grids_for(bench, 201, 101);
  FixedPointConfig cfg;
  cfg.damping = 1.0;
  cfg.tol = 1e-10;
  const auto sol = solve_equilibrium(make_problem(bench), initial_ensemble(bench, g.space), g, cfg);
  CHECK(sol.report.converged);
  REQUIRE(sol.report.residuals.size() >= 2);
  CHECK(sol.report.residuals[1] <= 1e-12);
  CHECK(sol.report.iterations <= 2);
}

TEST_CASE("coupled LQ equilibrium against the Riccati oracle") {
  const auto bench = lq_k4();
  const auto g = grids_for(bench, 401, 400);
  FixedPointConfig cfg;
  const auto sol = solve_equilibrium(make_problem(bench), initial_ensemble(bench, g.space), g, cfg);
  CHECK(sol.report.converged);
  const auto ric = riccati_oracle(bench, 4 * 399);
  CHECK(flow_distance(sol.rho_star, ric.flow(g), 1) <= 1e-2);
  CHECK(sol.report.certificate <= 10 * cfg.tol);
}

TEST_CASE("short horizon contracts geometrically") {
  auto bench = lq_k4();
  bench.horizon = 0.1;
  const auto g = grids_for(bench, 401, 81);
  FixedPointConfig cfg;
  cfg.damping = 1.0;
  cfg.tol = 1e-8;
  cfg.max_iter = 25;
  const auto sol = solve_equilibrium(make_problem(bench), initial_ensemble(bench, g.space), g, cfg);
  CHECK(sol.report.converged);
  for (double r : sol.report.contraction_ratios) CHECK(r < 1.0);
}

TEST_CASE("contraction estimates") {
  std::mt19937_64 gen(21);
  SUBCASE("measure-independent map has ratio zero") {
    const auto bench = lq_decoupled();
    const auto g = grids_for(bench, 161, 51);
    const auto a = random_flow(gen, g.space, g.time.times());
    const auto b = random_flow(gen, g.space, g.time.times());
    std::vector<MeasureEnsemble> snaps;
    for (Index n = 0; n < b.n_times(); ++n) snaps.push_back(n == 0 ? a.front() : b.snapshot(n));
    const EnsembleFlow b_from_a(g.time.times(), snaps);
    CHECK(estimate_contraction(make_problem(bench), a, b_from_a, g) == 0.0);
  }
  SUBCASE("short horizon ratios stay below one") {
    auto bench = lq_k4();
    bench.horizon = 0.1;
    const auto g = grids_for(bench, 241, 41);
    const auto pr = make_problem(bench);
    for (int pair = 0; pair < 20; ++pair) {
      const auto a = random_flow(gen, g.space, g.time.times());
      const auto b = random_flow(gen, g.space, g.time.times());
      CHECK(estimate_contraction(pr, a, b, g) < 1.0);
    }
  }
}

TEST_CASE("split horizon with a single window reproduces the flat solve") {
  const auto bench = lq_k4();
  const auto g = grids_for(bench, 161, 81);
  FixedPointConfig cfg;
  cfg.split_horizon = true;
  cfg.delta0_hint = bench.horizon;
  const auto pr = make_problem(bench);
  const auto mu0 = initial_ensemble(bench, g.space);
  const auto split = solve_split_horizon(pr, mu0, g, cfg);
  cfg.split_horizon = false;
  const auto flat = solve_equilibrium(pr, mu0, g, cfg);
  REQUIRE(split.rho_star.n_times() == flat.rho_star.n_times());
  for (Index n = 0; n < g.time.size(); ++n) {
    for (Index l = 0; l < 4; ++l) {
      CHECK((split.rho_star.density(n, l).array() == flat.rho_star.density(n, l).array()).all());
    }
  }
  CHECK(split.report.iterations == flat.report.iterations);
}

TEST_CASE("two-window solve of a decoupled problem equals the one-window solve") {
  const auto bench = lq_decoupled();
  const auto g = grids_for(bench, 201, 101);
  const auto pr = make_problem(bench);
  const auto mu0 = initial_ensemble(bench, g.space);
  FixedPointConfig cfg;
  cfg.tol = 1e-12;
  cfg.damping = 1.0;
  const auto one = solve_equilibrium(pr, mu0, g, cfg);
  cfg.split_horizon = true;
  cfg.delta0_hint = bench.horizon / 2;
  const auto two = solve_split_horizon(pr, mu0, g, cfg);
  CHECK(two.report.windows == 2);
  double worst = 0.0;
  for (Index n = 0; n < g.time.size(); ++n) {
    for (Index l = 0; l < 4; ++l) {
      worst = std::max(worst, (one.rho_star.density(n, l) - two.rho_star.density(n, l)).cwiseAbs().maxCoeff());
    }
  }
  CHECK(worst <= 1e-10);
  CHECK(flow_distance(one.rho_star, two.rho_star, 1) <= 1e-10);
}

TEST_CASE("long horizon: split solve converges where flat Picard oscillates") {
  const auto bench = lq_long();
  const auto g = grids_for(bench, 201, 201);
  const auto pr = make_problem(bench);
  const auto mu0 = initial_ensemble(bench, g.space);
  FixedPointConfig cfg;
  cfg.damping = 1.0;
  cfg.max_iter = 30;
  const auto flat = solve_equilibrium(pr, mu0, g, cfg);
  CHECK_FALSE(flat.report.converged);
  cfg.split_horizon = true;
  const auto split = solve_split_horizon(pr, mu0, g, cfg);
  CHECK(split.report.converged);
  CHECK(split.report.windows > 1);
  const auto ric = riccati_oracle(bench, 4 * 200);
  CHECK(flow_distance(split.rho_star, ric.flow(g), 1) <= 2e-2);
}

TEST_CASE("fixed-point configuration is validated") {
  FixedPointConfig cfg;
  cfg.tol = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
  cfg = {};
  cfg.damping = 1.5;
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
  cfg = {};
  cfg.max_iter = 0;
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
}
