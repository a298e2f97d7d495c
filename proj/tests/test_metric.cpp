#include <cmath>
#include <random>

#include "doctest.h"
#include "hmfg/errors.hpp"
#include "hmfg/wasserstein.hpp"
#include "oracles.hpp"

using namespace hmfg;

namespace {

struct Atoms {
  std::vector<double> x;
  std::vector<double> w;
};

Atoms random_atoms(std::mt19937_64& gen, int max_atoms) {
  std::uniform_int_distribution<int> count(1, max_atoms);
  std::uniform_real_distribution<double> pos(-3.0, 3.0);
  std::uniform_real_distribution<double> mass(0.05, 1.0);
  Atoms a;
  const int n = count(gen);
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    a.x.push_back(pos(gen));
    a.w.push_back(mass(gen));
    total += a.w.back();
  }
  for (double& w : a.w) w /= total;
  return a;
}

EmpiricalMeasure to_measure(const Atoms& a) { return EmpiricalMeasure(a.x, a.w); }

}  // namespace

TEST_CASE("wasserstein of Dirac masses") {
  const auto d0 = EmpiricalMeasure::uniform({0.0});
  CHECK(wasserstein1(d0, d0) == 0.0);
  CHECK(wasserstein2(EmpiricalMeasure::uniform({-1.25}), EmpiricalMeasure::uniform({2.0})) ==
        doctest::Approx(3.25).epsilon(1e-15));
  const auto split = EmpiricalMeasure::uniform({0.0, 2.0});
  const auto one = EmpiricalMeasure::uniform({1.0});
  CHECK(wasserstein1(split, one) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(wasserstein2(split, one) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(oracle::w1({0.0, 2.0}, {0.5, 0.5}, {1.0}, {1.0}) == doctest::Approx(1.0));
}

TEST_CASE("wasserstein of shifted uniform densities") {
  const StateGrid grid(-1.0, 3.0, 401);
  auto uniform_on = [&](double lo, double hi) {
    return GridMeasure::from_pdf(grid, [=](double x) { return x >= lo - 1e-12 && x <= hi + 1e-12 ? 1.0 : 0.0; });
  };
  const auto a = uniform_on(0.0, 1.0);
  const auto b = uniform_on(0.5, 1.5);
  CHECK(wasserstein1(a, b) == doctest::Approx(0.5).epsilon(1e-9));
  CHECK(wasserstein2(a, b) == doctest::Approx(0.5).epsilon(1e-9));
  const auto g = GridMeasure::gaussian(grid, 1.0, 0.4);
  CHECK(wasserstein2(g, g) == doctest::Approx(0.0).epsilon(1e-15));
}

TEST_CASE("W1 and W2 match the transport LP on small atom sets") {
  std::mt19937_64 gen(20240611);
  for (int trial = 0; trial < 300; ++trial) {
    const Atoms a = random_atoms(gen, 5);
    const Atoms b = random_atoms(gen, 5);
    CAPTURE(trial);
    CHECK(std::abs(wasserstein1(to_measure(a), to_measure(b)) - oracle::w1(a.x, a.w, b.x, b.w)) <= 1e-9);
    CHECK(std::abs(wasserstein2(to_measure(a), to_measure(b)) - oracle::w2(a.x, a.w, b.x, b.w)) <= 1e-9);
  }
}

TEST_CASE("ensemble distance averages the per-type transport costs") {
  std::mt19937_64 gen(77);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<Measure> phi, psi;
    double expected1 = 0.0, expected2 = 0.0;
    for (int l = 0; l < 3; ++l) {
      const Atoms a = random_atoms(gen, 5);
      const Atoms b = random_atoms(gen, 5);
      phi.emplace_back(to_measure(a));
      psi.emplace_back(to_measure(b));
      expected1 += oracle::w1(a.x, a.w, b.x, b.w) / 3.0;
      expected2 += oracle::w2(a.x, a.w, b.x, b.w) / 3.0;
    }
    const MeasureEnsemble e1(phi), e2(psi);
    CHECK(std::abs(ensemble_distance(e1, e2, 1) - expected1) <= 1e-9);
    CHECK(std::abs(ensemble_distance(e1, e2, 2) - expected2) <= 1e-9);
  }
  std::vector<Measure> zero, shifted;
  for (int l = 0; l < 4; ++l) {
    zero.emplace_back(EmpiricalMeasure::uniform({0.0}));
    shifted.emplace_back(EmpiricalMeasure::uniform({0.7}));
  }
  CHECK(ensemble_distance(MeasureEnsemble(zero), MeasureEnsemble(shifted), 1) == doctest::Approx(0.7));
}

TEST_CASE("ensemble distance is a metric on random triples") {
  std::mt19937_64 gen(5);
  const StateGrid grid(-6.0, 6.0, 241);
  std::uniform_int_distribution<int> types(1, 8);
  std::uniform_real_distribution<double> mean(-2.0, 2.0), sd(0.3, 1.2);
  for (int trial = 0; trial < 100; ++trial) {
    const int k = types(gen);
    auto draw = [&] {
      std::vector<Measure> ms;
      for (int l = 0; l < k; ++l) {
        if (trial % 2 == 0) {
          ms.emplace_back(GridMeasure::gaussian(grid, mean(gen), sd(gen)));
        } else {
          ms.emplace_back(to_measure(random_atoms(gen, 5)));
        }
      }
      return MeasureEnsemble(ms);
    };
    const auto a = draw(), b = draw(), c = draw();
    for (int p : {1, 2}) {
      const double ab = ensemble_distance(a, b, p);
      const double ba = ensemble_distance(b, a, p);
      CHECK(ensemble_distance(a, a, p) == 0.0);
      CHECK(ab >= 0.0);
      CHECK(std::abs(ab - ba) <= 1e-12);
      CHECK(ensemble_distance(a, c, p) <= ab + ensemble_distance(b, c, p) + 1e-12);
    }
  }
}

TEST_CASE("flow distance takes the max over nodes") {
  std::vector<double> times = {0.0, 0.5, 1.0};
  auto ensemble = [](double shift) {
    return MeasureEnsemble({EmpiricalMeasure::uniform({0.0 + shift, 1.0 + shift}), EmpiricalMeasure::uniform({shift})});
  };
  const EnsembleFlow a(times, {ensemble(0.0), ensemble(0.0), ensemble(0.0)});
  const EnsembleFlow b(times, {ensemble(0.0), ensemble(0.0), ensemble(0.3)});
  CHECK(flow_distance(a, a, 1) == 0.0);
  CHECK(flow_distance(a, b, 1) == doctest::Approx(0.3).epsilon(1e-14));
  const EnsembleFlow c(times, {ensemble(0.1), ensemble(-0.4), ensemble(0.2)});
  double expected = 0.0;
  for (Index n = 0; n < 3; ++n) expected = std::max(expected, ensemble_distance(a.snapshot(n), c.snapshot(n), 2));
  CHECK(flow_distance(a, c, 2) == expected);
  CHECK(expected == doctest::Approx(0.4));
}

TEST_CASE("kernel density projection") {
  const StateGrid grid(-5.0, 5.0, 401);
  const auto peak = empirical_to_grid(EmpiricalMeasure::uniform({0.0}), grid, 0.1);
  CHECK(std::abs(trapezoid(grid, peak.density()) - 1.0) <= 1e-9);
  Index argmax = 0;
  peak.density().maxCoeff(&argmax);
  CHECK(grid.node(argmax) == doctest::Approx(0.0));

  std::mt19937_64 gen(11);
  std::normal_distribution<double> z;
  std::vector<double> xs(100000);
  for (double& x : xs) x = z(gen);
  const auto kde = empirical_to_grid(EmpiricalMeasure::uniform(xs), grid);
  // W1 to N(0, 1) as the integral of |F_kde - Phi|, with F_kde accumulated independently by the trapezoid rule.
  const Vector& d = kde.density();
  double cdf = 0.0, w1 = 0.0;
  for (Index i = 1; i < grid.size(); ++i) {
    const double prev = cdf;
    cdf += 0.5 * grid.dx() * (d[i - 1] + d[i]);
    w1 += 0.5 * grid.dx() *
          (std::abs(prev - oracle::normal_cdf(grid.node(i - 1))) + std::abs(cdf - oracle::normal_cdf(grid.node(i))));
  }
  CHECK(w1 <= 0.02);

  CHECK_THROWS_AS(EmpiricalMeasure::uniform({}), ValidationError);
}

TEST_CASE("grid measure invariants") {
  const StateGrid grid(0.0, 1.0, 11);
  Vector bad = Vector::Constant(11, 2.0);
  CHECK_THROWS_AS(GridMeasure(grid, bad), ValidationError);
  Vector negative = Vector::Constant(11, 1.0);
  negative[3] = -0.1;
  CHECK_THROWS_AS(GridMeasure::normalized(grid, negative), ValidationError);
  CHECK_THROWS_AS(EmpiricalMeasure({0.0, 1.0}, {0.5, 0.6}), ValidationError);
  CHECK_THROWS_AS(StateGrid(1.0, 0.0, 11), ValidationError);
  CHECK_THROWS_AS(StateGrid(0.0, 1.0, 2), ValidationError);
  CHECK_THROWS_AS(MeasureEnsemble({EmpiricalMeasure::uniform({0.0})}, {1.5}), ValidationError);
}
