#include <cmath>
#include <random>

#include "doctest.h"
#include "fixtures.hpp"
#include "hmfg/errors.hpp"
#include "hmfg/mfcalculus.hpp"

using namespace hmfg;

namespace {

MeasureEnsemble random_grid_ensemble(std::mt19937_64& gen, const StateGrid& grid, int k) {
  std::uniform_real_distribution<double> mean(-1.5, 1.5), sd(0.3, 1.0), weight(0.0, 1.0);
  std::vector<Measure> ms;
  for (int l = 0; l < k; ++l) {
    const double m1 = mean(gen), m2 = mean(gen), s1 = sd(gen), s2 = sd(gen), w = weight(gen);
    ms.emplace_back(GridMeasure::from_pdf(grid, [=](double x) {
      return w * std::exp(-0.5 * (x - m1) * (x - m1) / (s1 * s1)) / s1 +
             (1.0 - w) * std::exp(-0.5 * (x - m2) * (x - m2) / (s2 * s2)) / s2;
    }));
  }
  return MeasureEnsemble(ms);
}

TestFunctional sine_functional() {
  TestFunctional tf;
  tf.name = "sine";
  tf.h = [](double y) { return y; };
  tf.dh = [](double) { return 1.0; };
  tf.psi = [](double x) { return std::sin(x); };
  tf.dpsi = [](double x) { return std::cos(x); };
  tf.d2psi = [](double x) { return -std::sin(x); };
  tf.type_weight = [](double th) { return th * th; };
  return tf;
}

}  // namespace

TEST_CASE("derivative of a linear functional ignores the measure") {
  std::mt19937_64 gen(2);
  const StateGrid grid(-6.0, 6.0, 241);
  const auto tf = sine_functional();
  for (int trial = 0; trial < 5; ++trial) {
    const auto mu = random_grid_ensemble(gen, grid, 3);
    for (double x : {-1.0, 0.3, 2.0}) {
      for (double th : {0.25, 1.0}) {
        CHECK(linear_functional_derivative(tf, mu, x, th) == doctest::Approx(std::sin(x) * th * th).epsilon(1e-15));
      }
    }
  }
}

TEST_CASE("linear functional derivative matches finite differences to second order") {
  std::mt19937_64 gen(4);
  const StateGrid grid(-6.0, 6.0, 241);
  const auto tf = squared_weighted_mean_functional();
  auto f = [&](const MeasureEnsemble& m) { return evaluate(tf, m); };
  for (int pair = 0; pair < 20; ++pair) {
    const auto mu = random_grid_ensemble(gen, grid, 4);
    const auto nu = random_grid_ensemble(gen, grid, 4);
    const double d = directional_derivative(tf, mu, nu);
    double err[2];
    int i = 0;
    for (double eps : {1e-3, 1e-4}) err[i++] = std::abs(eps * directional_derivative_fd(f, mu, nu, eps) - eps * d);
    const double gap = aggregate(tf, nu) - aggregate(tf, mu);
    CHECK(err[0] == doctest::Approx(1e-6 * gap * gap).epsilon(1e-4));
    CHECK(err[0] / err[1] == doctest::Approx(100.0).epsilon(0.01));
  }
}

TEST_CASE("normalization makes a constant test function inert") {
  std::mt19937_64 gen(6);
  const StateGrid grid(-6.0, 6.0, 241);
  TestFunctional tf = sine_functional();
  tf.h = [](double y) { return std::exp(y); };
  tf.dh = [](double y) { return std::exp(y); };
  tf.psi = [](double) { return 1.0; };
  tf.dpsi = [](double) { return 0.0; };
  tf.d2psi = [](double) { return 0.0; };
  const auto mu = random_grid_ensemble(gen, grid, 4);
  const auto nu = random_grid_ensemble(gen, grid, 4);
  CHECK(evaluate(tf, mu) == doctest::Approx(evaluate(tf, nu)).epsilon(1e-12));
  CHECK(std::abs(directional_derivative(tf, mu, nu)) <= 1e-12);
}

TEST_CASE("Ito check on the built-in cases") {
  const auto cases = builtin_ito_cases(StateGrid(-8.0, 8.0, 801));
  REQUIRE(cases.size() == 3);
  ItoParams params;
  params.dt = 2e-3;
  SUBCASE("linear drift within three standard errors") {
    params.particles = 20000;
    const auto s = run_ito_case(cases[0], params, {1, 2, 3, 4, 5});
    CHECK(s.passed);
    CHECK_FALSE(s.inconclusive);
    CHECK(std::abs(s.lhs_mean - s.exact) <= 3.0 * 5.0 * s.combined_se);
  }
  SUBCASE("too few particles is inconclusive") {
    params.particles = 100;
    const auto s = run_ito_case(cases[1], params, {1, 2, 3, 4, 5, 6, 7, 8, 9, 10});
    CHECK(s.inconclusive);
  }
  SUBCASE("a single seed is inconclusive") {
    params.particles = 1000;
    CHECK(run_ito_case(cases[0], params, {1}).inconclusive);
  }
}

TEST_CASE("decoupling field of a zero-cost problem vanishes") {
  const auto pr = fixtures::zero_cost_problem(0.7, 0.5);
  const SolverGrids g{StateGrid(-6.0, 6.0, 161), TimeGrid(0.0, 0.5, 51)};
  const auto bench = lq_decoupled();
  const auto sol = solve_equilibrium(pr, initial_ensemble(bench, g.space), g, FixedPointConfig{});
  DecouplingParams dp;
  dp.paths = 500;
  dp.dt = 0.01;
  const auto r = decoupling_residual(pr, sol, dp);
  CHECK(r.drift_residual <= 1e-10);
  CHECK(r.martingale_residual <= 1e-10);
  CHECK(r.terminal_error <= 1e-10);
}

TEST_CASE("decoupling field terminal condition on the LQ equilibrium") {
  const auto bench = lq_k4();
  const SolverGrids g{StateGrid(-6.0, 6.0, 401), TimeGrid(0.0, bench.horizon, 101)};
  const auto sol = riccati_solution(bench, g);
  DecouplingParams dp;
  dp.paths = 2000;
  dp.dt = 0.005;
  const auto r = decoupling_residual(sol.problem, sol, dp);
  CHECK(r.terminal_error <= 1e-3);
  dp.dt = 0.003;
  CHECK_THROWS_AS(decoupling_residual(sol.problem, sol, dp), ValidationError);
}

TEST_CASE("master equation residuals") {
  SUBCASE("no cost and no coupling") {
    auto bench = lq_decoupled();
    bench.cost.setZero();
    const SolverGrids g{StateGrid(-4.0, 4.0, 41), TimeGrid(0.0, bench.horizon, 21)};
    const auto r = master_residual_lq(bench, g);
    CHECK(r.max_analytic == 0.0);
  }
  SUBCASE("decoupled") {
    const auto bench = lq_decoupled();
    const SolverGrids g{StateGrid(-4.0, 4.0, 41), TimeGrid(0.0, bench.horizon, 21)};
    CHECK(master_residual_lq(bench, g).max_analytic <= 1e-8);
  }
  SUBCASE("coupled, both derivative routes") {
    const auto bench = lq_k4();
    const SolverGrids g{StateGrid(-4.0, 4.0, 41), TimeGrid(0.0, bench.horizon, 21)};
    const auto r = master_residual_lq(bench, g);
    CHECK(r.max_analytic <= 1e-6);
    CHECK(r.max_fd <= 1e-3);
    CHECK(r.samples > 0);
  }
}
