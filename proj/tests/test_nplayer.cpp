#include <cmath>
#include <random>

#include "doctest.h"
#include "fixtures.hpp"
#include "hmfg/errors.hpp"
#include "hmfg/lq.hpp"
#include "hmfg/nplayer.hpp"
#include "hmfg/wasserstein.hpp"
#include "oracles.hpp"

using namespace hmfg;

namespace {

EquilibriumSolution solve_lq(const LQBenchmark& bench, Index n_x = 161, Index n_t = 51) {
  const SolverGrids g{StateGrid(-6.0, 6.0, n_x), TimeGrid(0.0, bench.horizon, n_t)};
  FixedPointConfig cfg;
  return solve_equilibrium(make_problem(bench), initial_ensemble(bench, g.space), g, cfg);
}

LQBenchmark single_type() {
  auto b = lq_decoupled();
  b.cost = Vector{{1.0}};
  b.coupling = Vector{{0.0}};
  b.vol = Vector{{0.8}};
  b.init_mean = Vector{{0.3}};
  b.init_std = Vector{{0.5}};
  return b;
}

}  // namespace

TEST_CASE("balanced clusters and labels") {
  const auto c = NPlayerConfig::balanced(10, 4, 0.01, 1, 0);
  CHECK(c.cluster_sizes == std::vector<Index>{3, 3, 2, 2});
  CHECK(c.n_min() == 2);
  CHECK(cluster_labels(c) == std::vector<Index>{0, 0, 0, 1, 1, 1, 2, 2, 3, 3});
  auto bad = c;
  bad.n_paths = 0;
  CHECK_THROWS_AS(bad.validate(), ValidationError);
  bad = c;
  bad.cluster_sizes = {5, 5, 0, 0};
  CHECK_THROWS_AS(bad.validate(), ValidationError);
}

TEST_CASE("lifted strategies") {
  const auto sol = solve_lq(lq_k4());
  SUBCASE("singleton clusters") {
    const auto c = NPlayerConfig::balanced(4, 4, 0.01, 1, 0);
    const auto fb = lift_strategy(sol, c);
    for (Index l = 0; l < 4; ++l) CHECK(fb[static_cast<std::size_t>(l)](0.2, 0.4) == sol.feedback(l, 0.2, 0.4));
  }
  SUBCASE("arbitrary clusters") {
    NPlayerConfig c = NPlayerConfig::balanced(12, 4, 0.01, 1, 0);
    c.cluster_sizes = {1, 5, 2, 4};
    const auto fb = lift_strategy(sol, c);
    Index player = 0;
    for (Index l = 0; l < 4; ++l) {
      for (Index j = 0; j < c.cluster_sizes[static_cast<std::size_t>(l)]; ++j, ++player) {
        CHECK(fb[static_cast<std::size_t>(player)](0.31, -0.7) == sol.feedback(l, 0.31, -0.7));
      }
    }
  }
  SUBCASE("one type") {
    const auto one = solve_lq(single_type());
    const auto fb = lift_strategy(one, NPlayerConfig::balanced(7, 1, 0.01, 1, 0));
    for (const auto& f : fb) CHECK(f(0.1, 0.9) == one.feedback(0, 0.1, 0.9));
  }
}

TEST_CASE("pure Brownian players") {
  const auto pr = fixtures::constant_feedback_problem(0.0, 1.0, [](double) { return 0.0; }, 0.5);
  auto c = NPlayerConfig::balanced(400, 1, 0.01, 1, 99);
  const std::vector<Feedback> fb(400, [](double, double) { return 0.0; });
  const std::vector<double> x0(400, 0.0);
  double sum = 0.0, sum_sq = 0.0;
  Index count = 0;
  for (Index r = 0; r < 10; ++r) {
    const auto bundle = simulate_nplayer(pr, fb, x0, c, r);
    const Index last = bundle.states.rows() - 1;
    for (Index i = 0; i < 400; ++i) {
      sum += bundle.states(last, i);
      sum_sq += bundle.states(last, i) * bundle.states(last, i);
      ++count;
    }
  }
  const double n = static_cast<double>(count);
  const double var = (sum_sq - sum * sum / n) / (n - 1.0);
  CHECK(std::abs(var - 0.5) <= 3.0 * 0.5 * std::sqrt(2.0 / (n - 1.0)));
}

TEST_CASE("deterministic drift players") {
  auto pr = fixtures::constant_feedback_problem(1.0, 1.0, [](double) { return 0.0; }, 0.5);
  pr.vol = [](double, double, double, const MeasureEnsemble&) { return 0.0; };
  const auto c = NPlayerConfig::balanced(5, 1, 0.01, 1, 3);
  const std::vector<Feedback> fb(5, [](double, double) { return 1.0; });
  const std::vector<double> x0 = {-1.0, 0.0, 0.5, 2.0, 3.0};
  const auto bundle = simulate_nplayer(pr, fb, x0, c);
  for (Index n = 0; n < bundle.states.rows(); ++n) {
    for (Index i = 0; i < 5; ++i) {
      CHECK(std::abs(bundle.states(n, i) - (x0[static_cast<std::size_t>(i)] + bundle.times[static_cast<std::size_t>(n)])) <=
            1e-12);
    }
  }
}

TEST_CASE("simulation is independent of the worker count") {
  const auto sol = solve_lq(lq_k4());
  auto c = NPlayerConfig::balanced(40, 4, 0.01, 6, 1234);
  const auto a = run_chaos(sol.problem, sol, c);
  c.workers = 3;
  const auto b = run_chaos(sol.problem, sol, c);
  CHECK(a.statistic == b.statistic);
  CHECK(a.mean_d1_sq == b.mean_d1_sq);
  CHECK(a.delta_w1_sq == b.delta_w1_sq);
  const auto x0 = draw_initial_states(sol.rho_star.front(), c, 2);
  const auto fb = lift_strategy(sol, c);
  const auto p1 = simulate_nplayer(sol.problem, fb, x0, c, 2);
  const auto p2 = simulate_nplayer(sol.problem, fb, x0, c, 2);
  CHECK((p1.states.array() == p2.states.array()).all());
  CHECK(p1.payoffs == p2.payoffs);
}

TEST_CASE("chaos statistic of the equilibrium itself vanishes") {
  const auto sol = solve_lq(lq_k4());
  const auto r = chaos_statistic(std::vector<EnsembleFlow>{sol.rho_star, sol.rho_star}, sol.rho_star);
  CHECK(r.statistic <= 1e-6);
}

TEST_CASE("chaos statistic decreases with N for one decoupled type") {
  const auto sol = solve_lq(single_type());
  std::vector<double> stats;
  for (Index n : {50, 200, 800}) {
    stats.push_back(run_chaos(sol.problem, sol, NPlayerConfig::balanced(n, 1, 0.01, 20, 5)).statistic);
  }
  CHECK(stats[1] < stats[0]);
  CHECK(stats[2] < stats[1]);
}

TEST_CASE("empirical W1 between independent samples decays like 1/n") {
  std::mt19937_64 gen(17);
  std::normal_distribution<double> z;
  std::vector<double> sizes, means;
  for (int n : {50, 200, 800, 3200}) {
    double acc = 0.0;
    const int reps = 200;
    for (int r = 0; r < reps; ++r) {
      std::vector<double> a(static_cast<std::size_t>(n)), b(static_cast<std::size_t>(n));
      for (auto& v : a) v = z(gen);
      for (auto& v : b) v = z(gen);
      const double w = wasserstein1(EmpiricalMeasure::uniform(a), EmpiricalMeasure::uniform(b));
      acc += w * w;
    }
    sizes.push_back(n);
    means.push_back(acc / reps);
  }
  const double slope = oracle::loglog_slope(sizes, means);
  CHECK(slope >= -1.3);
  CHECK(slope <= -0.7);
}

TEST_CASE("exploitability") {
  SUBCASE("equilibrium deviation gains nothing under common random numbers") {
    const auto sol = solve_lq(lq_k4());
    const auto c = NPlayerConfig::balanced(40, 4, 0.01, 5, 8);
    const auto fb = lift_strategy(sol, c);
    const auto r = exploitability_of(sol.problem, sol, c, 7, fb[7]);
    CHECK(r.j_dev == r.j_eq);
    CHECK(r.eps_hat == 0.0);
  }
  SUBCASE("decoupled problem") {
    const auto sol = solve_lq(lq_decoupled());
    const auto c = NPlayerConfig::balanced(40, 4, 0.01, 20, 8);
    const auto r = exploitability(sol.problem, sol, c, 0);
    CHECK(std::abs(r.gain_mean) <= r.gain_ci_half_width + 1e-15);
  }
}
