#include <cmath>
#include <random>

#include "doctest.h"
#include "fixtures.hpp"
#include "hmfg/hjb_fp.hpp"
#include "hmfg/lq.hpp"
#include "hmfg/wasserstein.hpp"

using namespace hmfg;

namespace {

EnsembleFlow frozen_single(const SolverGrids& g, double mean, double sd) {
  return EnsembleFlow::frozen(MeasureEnsemble({GridMeasure::gaussian(g.space, mean, sd)}), g.time.times());
}

GridMeasure final_law(const DensityFlow& d, const StateGrid& grid) {
  return GridMeasure::normalized(grid, d.density.row(d.density.rows() - 1).transpose());
}

}  // namespace

TEST_CASE("linear terminal data is preserved by the heat equation") {
  const auto pr = fixtures::constant_feedback_problem(0.0, 1.0, [](double x) { return x; }, 0.5);
  const SolverGrids g{StateGrid(-10.0, 10.0, 401), TimeGrid(0.0, 0.5, 101)};
  const auto v = solve_hjb(pr, 1.0, frozen_single(g, 0.0, 1.0), g);
  // The Neumann layer is a few diffusion lengths sqrt(T) wide; beyond six units it is below rounding.
  double worst = 0.0;
  for (Index n = 0; n < v.n_times(); ++n) {
    for (Index i = 0; i < g.space.size(); ++i) {
      const double x = g.space.node(i);
      if (std::abs(x) <= 4.0) worst = std::max(worst, std::abs(v.u(n, i) - x));
    }
  }
  CHECK(worst <= 1e-10);
}

TEST_CASE("quadratic terminal data follows the heat closed form") {
  const double horizon = 0.5;
  const auto pr = fixtures::constant_feedback_problem(0.0, 1.0, [](double x) { return x * x; }, horizon);
  const SolverGrids g{StateGrid(-6.0, 6.0, 401), TimeGrid(0.0, horizon, 101)};
  const auto v = solve_hjb(pr, 1.0, frozen_single(g, 0.0, 1.0), g);
  double worst = 0.0;
  for (Index n = 0; n < v.n_times(); ++n) {
    for (Index i = 0; i < g.space.size(); ++i) {
      const double x = g.space.node(i);
      if (std::abs(x) > 2.0) continue;
      worst = std::max(worst, std::abs(v.u(n, i) - (x * x + horizon - v.times[static_cast<std::size_t>(n)])));
    }
  }
  CHECK(worst <= 1e-3);
}

TEST_CASE("LQ value against the oracle's frozen flow") {
  const auto bench = lq_k4();
  const auto pr = make_problem(bench);
  const SolverGrids g{StateGrid(-6.0, 6.0, 401), TimeGrid(0.0, bench.horizon, 400)};
  const auto ric = riccati_oracle(bench, 4 * 399);
  const auto flow = ric.flow(g);
  double worst = 0.0;
  for (Index l = 0; l < 4; ++l) {
    const auto v = solve_hjb(pr, flow.type_points()[static_cast<std::size_t>(l)], flow, g);
    const auto exact = ric.value_field(l, g);
    for (Index n = 0; n < v.n_times(); ++n) {
      for (Index i = 0; i < g.space.size(); ++i) {
        if (std::abs(g.space.node(i)) <= 4.0) worst = std::max(worst, std::abs(v.u(n, i) - exact.u(n, i)));
      }
    }
  }
  CHECK(worst <= 5e-3);
}

TEST_CASE("Fokker-Planck diffusion and advection") {
  SUBCASE("second moment grows by s^2 t") {
    const double s = 0.8;
    const auto pr = fixtures::constant_feedback_problem(0.0, s, [](double) { return 0.0; }, 1.0);
    const SolverGrids g{StateGrid(-6.0, 6.0, 401), TimeGrid(0.0, 1.0, 201)};
    const auto flow = frozen_single(g, 0.0, 0.2);
    const auto mu0 = GridMeasure::gaussian(g.space, 0.0, 0.2);
    const auto d = solve_fp(pr, 1.0, solve_hjb(pr, 1.0, flow, g), flow, mu0, g);
    for (Index n = 20; n < g.time.size(); n += 20) {
      const auto m = GridMeasure::normalized(g.space, d.density.row(n).transpose());
      const double growth = m.second_moment() - mu0.second_moment();
      CHECK(growth == doctest::Approx(s * s * g.time.time(n)).epsilon(0.02));
    }
  }
  SUBCASE("constant drift advects the mean") {
    const auto pr = fixtures::constant_feedback_problem(1.0, 0.1, [](double) { return 0.0; }, 1.0);
    const SolverGrids g{StateGrid(-2.0, 4.0, 401), TimeGrid(0.0, 1.0, 201)};
    const auto flow = frozen_single(g, 0.0, 0.3);
    const auto mu0 = GridMeasure::gaussian(g.space, 0.0, 0.3);
    const auto d = solve_fp(pr, 1.0, solve_hjb(pr, 1.0, flow, g), flow, mu0, g);
    CHECK(final_law(d, g.space).mean() - mu0.mean() == doctest::Approx(1.0).epsilon(0.01));
  }
  SUBCASE("mass is conserved at every step") {
    const auto bench = lq_k4();
    const auto pr = make_problem(bench);
    const SolverGrids g{StateGrid(-6.0, 6.0, 241), TimeGrid(0.0, bench.horizon, 101)};
    const auto mu0 = initial_ensemble(bench, g.space);
    const auto flow = EnsembleFlow::frozen(mu0, g.time.times());
    for (Index l = 0; l < 4; ++l) {
      const double theta = flow.type_points()[static_cast<std::size_t>(l)];
      const auto d = solve_fp(pr, theta, solve_hjb(pr, theta, flow, g), flow, mu0.grid_measure(l), g);
      for (Index n = 0; n < d.density.rows(); ++n) {
        CHECK(std::abs(trapezoid(g.space, d.density.row(n).transpose()) - 1.0) <= 1e-8);
      }
    }
  }
}

TEST_CASE("best response of a measure-independent problem ignores the input flow") {
  const auto bench = lq_decoupled();
  const auto pr = make_problem(bench);
  const SolverGrids g{StateGrid(-6.0, 6.0, 161), TimeGrid(0.0, bench.horizon, 51)};
  const auto mu0 = initial_ensemble(bench, g.space);
  const auto a = best_response_flow(pr, EnsembleFlow::frozen(mu0, g.time.times()), mu0, g);
  const auto shifted = initial_ensemble(lq_long(), g.space);
  const auto b = best_response_flow(pr, EnsembleFlow::frozen(shifted, g.time.times()), mu0, g);
  for (Index n = 0; n < g.time.size(); ++n) {
    for (Index l = 0; l < 4; ++l) CHECK((a.flow.density(n, l).array() == b.flow.density(n, l).array()).all());
  }
}

TEST_CASE("best response respects a type swap") {
  LQBenchmark bench;
  bench.cost = Vector{{1.5, 1.5}};
  bench.coupling = Vector{{0.5, 0.5}};
  bench.vol = Vector{{0.7, 0.7}};
  bench.init_mean = Vector{{-0.8, 0.8}};
  bench.init_std = Vector{{0.5, 0.5}};
  const auto pr = make_problem(bench);
  const SolverGrids g{StateGrid(-5.0, 5.0, 201), TimeGrid(0.0, bench.horizon, 51)};
  const auto mu0 = initial_ensemble(bench, g.space);
  const auto br = best_response_flow(pr, EnsembleFlow::frozen(mu0, g.time.times()), mu0, g);
  // The data are invariant under x -> -x combined with the swap, and the frozen mean is zero.
  for (Index n = 0; n < g.time.size(); ++n) {
    const Vector& d0 = br.flow.density(n, 0);
    const Vector& d1 = br.flow.density(n, 1);
    CHECK((d0 - d1.reverse()).cwiseAbs().maxCoeff() <= 1e-10);
  }
}

TEST_CASE("best response at the Riccati fixed point") {
  const auto bench = lq_k4();
  const auto pr = make_problem(bench);
  const SolverGrids g{StateGrid(-6.0, 6.0, 401), TimeGrid(0.0, bench.horizon, 400)};
  const auto ric = riccati_oracle(bench, 4 * 399);
  const auto rho = ric.flow(g);
  const auto br = best_response_flow(pr, rho, rho.front(), g);
  CHECK(flow_distance(br.flow, rho, 1) <= 5e-3);
  CHECK_FALSE(br.guard.violated);
}

TEST_CASE("ordered terminal data give ordered values") {
  std::mt19937_64 gen(8);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const auto bench = lq_k4();
  const SolverGrids g{StateGrid(-5.0, 5.0, 161), TimeGrid(0.0, bench.horizon, 81)};
  const auto mu0 = initial_ensemble(bench, g.space);
  const auto flow = EnsembleFlow::frozen(mu0, g.time.times());
  for (int trial = 0; trial < 10; ++trial) {
    const double a = u(gen), b = u(gen), gap = 0.5 * (1.0 + u(gen));
    HMFGProblem low = make_problem(bench);
    HMFGProblem high = low;
    low.terminal_cost = [a, b](double, double x, const MeasureEnsemble&) { return a * std::sin(x) + b * x; };
    high.terminal_cost = [a, b, gap](double, double x, const MeasureEnsemble&) {
      return a * std::sin(x) + b * x + gap * (1.0 + std::cos(3.0 * x));
    };
    const double theta = flow.type_points()[static_cast<std::size_t>(trial % 4)];
    const auto vl = solve_hjb(low, theta, flow, g);
    const auto vh = solve_hjb(high, theta, flow, g);
    CHECK((vh.u - vl.u).minCoeff() >= -1e-10);
  }
}

TEST_CASE("observed gradient bound is stable under refinement") {
  const auto bench = lq_k4();
  const auto pr = make_problem(bench);
  std::vector<double> bounds;
  for (Index level = 0; level < 3; ++level) {
    const SolverGrids g{StateGrid(-6.0, 6.0, 100 * (Index{1} << level) + 1),
                        TimeGrid(0.0, bench.horizon, 50 * (Index{1} << level) + 1)};
    const auto mu0 = initial_ensemble(bench, g.space);
    bounds.push_back(best_response_flow(pr, EnsembleFlow::frozen(mu0, g.time.times()), mu0, g).guard.max_observed);
  }
  for (double b : bounds) CHECK(std::isfinite(b));
  CHECK(std::abs(bounds[2] - bounds[1]) <= std::abs(bounds[1] - bounds[0]) + 1e-12);
  CHECK(std::abs(bounds[2] - bounds[1]) <= 0.02 * bounds[2]);
}
