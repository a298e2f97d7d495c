#include "hmfg/problem.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>

#include "hmfg/errors.hpp"
#include "hmfg/wasserstein.hpp"

namespace hmfg {

bool ActionBounds::finite() const { return std::isfinite(lo) && std::isfinite(hi) && lo <= hi; }

SupResult hamiltonian_from_sup(const HMFGProblem& problem, double p, double theta, double t, double x,
                               const MeasureEnsemble& mu, Index n_a) {
  if (!problem.actions.finite()) {
    throw ConfigError("hamiltonian_from_sup: action interval is unbounded and no closed-form Hamiltonian is supplied");
  }
  if (n_a < 2) throw ValidationError("hamiltonian_from_sup: n_a must be at least 2");
  const double lo = problem.actions.lo;
  const double hi = problem.actions.hi;
  auto h = [&](double a) { return problem.drift(theta, t, x, mu, a) * p + problem.running_cost(theta, t, x, mu, a); };
  const double step = (hi - lo) / static_cast<double>(n_a - 1);
  Index best = 0;
  double best_value = h(lo);
  for (Index i = 1; i < n_a; ++i) {
    const double a = i + 1 == n_a ? hi : lo + step * static_cast<double>(i);
    const double v = h(a);
    if (v > best_value) {
      best_value = v;
      best = i;
    }
  }
  double best_a = best + 1 == n_a ? hi : lo + step * static_cast<double>(best);
  if (step == 0.0) return {best_value, best_a};

  double left = std::max(lo, best_a - step);
  double right = std::min(hi, best_a + step);
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double c = right - inv_phi * (right - left);
  double d = left + inv_phi * (right - left);
  double fc = h(c);
  double fd = h(d);
  const double tol = 1e-12 * (1.0 + (hi - lo));
  for (int it = 0; it < 200 && right - left > tol; ++it) {
    if (fc >= fd) {
      right = d;
      d = c;
      fd = fc;
      c = right - inv_phi * (right - left);
      fc = h(c);
    } else {
      left = c;
      c = d;
      fc = fd;
      d = left + inv_phi * (right - left);
      fd = h(d);
    }
  }
  const double a_ref = 0.5 * (left + right);
  const double v_ref = h(a_ref);
  if (v_ref > best_value) return {v_ref, a_ref};
  return {best_value, best_a};
}

HamiltonianTriple resolve_hamiltonian(const HMFGProblem& problem) {
  HamiltonianTriple out{problem.hamiltonian, problem.hamiltonian_grad, problem.feedback};
  const bool need_sup = !out.hamiltonian || !out.feedback;
  if (need_sup && !problem.actions.finite()) {
    throw ConfigError(problem.name + ": unbounded action interval requires a closed-form Hamiltonian and feedback");
  }
  const Index n_a = problem.action_grid;
  if (!out.hamiltonian) {
    out.hamiltonian = [problem, n_a](double th, double t, double x, double p, const MeasureEnsemble& mu) {
      return hamiltonian_from_sup(problem, p, th, t, x, mu, n_a).value;
    };
  }
  if (!out.feedback) {
    out.feedback = [problem, n_a](double th, double t, double x, double p, const MeasureEnsemble& mu) {
      return hamiltonian_from_sup(problem, p, th, t, x, mu, n_a).argmax;
    };
  }
  if (!out.hamiltonian_grad) {
    auto feedback = out.feedback;
    auto drift = problem.drift;
    out.hamiltonian_grad = [feedback, drift](double th, double t, double x, double p, const MeasureEnsemble& mu) {
      return drift(th, t, x, mu, feedback(th, t, x, p, mu));
    };
  }
  return out;
}

void check_problem(const HMFGProblem& problem) {
  const std::string who = problem.name + ": ";
  if (!problem.drift) throw ValidationError(who + "drift is not set");
  if (!problem.vol) throw ValidationError(who + "volatility is not set");
  if (!problem.running_cost) throw ValidationError(who + "running cost is not set");
  if (!problem.terminal_cost) throw ValidationError(who + "terminal cost is not set");
  if (!(problem.lipschitz > 0.0)) throw ValidationError(who + "Lipschitz constant must be positive");
  if (!(problem.horizon > 0.0)) throw ValidationError(who + "horizon must be positive");
  if (!(problem.actions.lo <= problem.actions.hi)) throw ValidationError(who + "empty action interval");
}

TruncationGuard::TruncationGuard(double bound_) : bound(bound_) {
  if (!(bound_ > 0.0)) throw ValidationError("TruncationGuard: bound must be positive");
}

void TruncationGuard::observe(double z, double theta_at, double t_at, double x_at) {
  const double az = std::abs(z);
  if (az > max_observed || std::isnan(az)) {
    max_observed = az;
    theta = theta_at;
    t = t_at;
    x = x_at;
  }
  if (!(az <= bound)) violated = true;
}

void TruncationGuard::merge(const TruncationGuard& other) {
  if (other.max_observed > max_observed) {
    max_observed = other.max_observed;
    theta = other.theta;
    t = other.t;
    x = other.x;
  }
  violated = violated || other.violated;
}

namespace {

MeasureEnsemble random_ensemble(const StateGrid& grid, Index n_types, std::mt19937_64& rng) {
  const double width = grid.x_max() - grid.x_min();
  std::uniform_real_distribution<double> centre(grid.x_min() + 0.3 * width, grid.x_max() - 0.3 * width);
  std::uniform_real_distribution<double> spread(0.03 * width, 0.12 * width);
  std::vector<Measure> ms;
  for (Index l = 0; l < n_types; ++l) ms.emplace_back(GridMeasure::gaussian(grid, centre(rng), spread(rng)));
  return MeasureEnsemble(std::move(ms));
}

struct Sample {
  double theta;
  double t;
  double x1;
  double x2;
  double a1;
  double a2;
  std::size_t m1;
  std::size_t m2;
};

}  // namespace

ValidationReport validate_problem(const HMFGProblem& problem, const StateGrid& grid, Index n_types, Index n_samples,
                                  std::uint64_t seed) {
  check_problem(problem);
  if (n_types < 1) throw ValidationError("validate_problem: need at least one type");
  ValidationReport report;
  const double L = problem.lipschitz;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  constexpr std::size_t kPool = 6;
  std::vector<MeasureEnsemble> pool;
  for (std::size_t i = 0; i < kPool; ++i) pool.push_back(random_ensemble(grid, n_types, rng));
  std::vector<std::vector<double>> d1(kPool, std::vector<double>(kPool, 0.0));
  for (std::size_t i = 0; i < kPool; ++i) {
    for (std::size_t j = i + 1; j < kPool; ++j) d1[i][j] = d1[j][i] = ensemble_distance(pool[i], pool[j], 1);
  }

  const auto thetas = MeasureEnsemble::uniform_type_points(n_types);
  const double width = grid.x_max() - grid.x_min();
  const bool finite_a = problem.actions.finite();
  const double a_lo = finite_a ? problem.actions.lo : -1.0;
  const double a_hi = finite_a ? problem.actions.hi : 1.0;

  auto draw = [&]() {
    Sample s{};
    s.theta = thetas[static_cast<std::size_t>(rng() % static_cast<std::uint64_t>(n_types))];
    s.t = unit(rng) * problem.horizon;
    s.x1 = grid.x_min() + unit(rng) * width;
    const int mode = static_cast<int>(rng() % 4);
    const double scale = width * std::pow(10.0, -4.0 * unit(rng));
    s.x2 = mode == 0 || mode == 3 ? std::clamp(s.x1 + scale * (2.0 * unit(rng) - 1.0), grid.x_min(), grid.x_max())
                                  : s.x1;
    s.a1 = a_lo + unit(rng) * (a_hi - a_lo);
    s.a2 = mode == 1 || mode == 3 ? std::clamp(s.a1 + (a_hi - a_lo) * std::pow(10.0, -4.0 * unit(rng)) *
                                                          (2.0 * unit(rng) - 1.0),
                                               a_lo, a_hi)
                                  : s.a1;
    s.m1 = static_cast<std::size_t>(rng() % kPool);
    s.m2 = mode == 2 || mode == 3 ? static_cast<std::size_t>(rng() % kPool) : s.m1;
    return s;
  };

  enum Coef { kB = 0, kSigma, kF, kG, kCount };
  const char* names[kCount] = {"drift", "vol", "running_cost", "terminal_cost"};
  auto eval = [&](int c, double theta, double t, double x, const MeasureEnsemble& mu, double a) {
    switch (c) {
      case kB: return problem.drift(theta, t, x, mu, a);
      case kSigma: return problem.vol(theta, t, x, mu);
      case kF: return problem.running_cost(theta, t, x, mu, a);
      default: return problem.terminal_cost(theta, x, mu);
    }
  };
  std::vector<LipschitzRatio> worst(kCount);
  std::vector<Sample> worst_x_only(kCount);
  std::vector<double> worst_x_ratio(kCount, -1.0);
  for (int c = 0; c < kCount; ++c) worst[static_cast<std::size_t>(c)].coefficient = names[c];

  double min_sigma_l = std::numeric_limits<double>::infinity();
  auto triple = resolve_hamiltonian(problem);
  for (Index k = 0; k < n_samples; ++k) {
    const Sample s = draw();
    const auto& mu1 = pool[s.m1];
    const auto& mu2 = pool[s.m2];
    const double dm = d1[s.m1][s.m2];
    for (int c = 0; c < kCount; ++c) {
      const bool uses_a = c == kB || c == kF;
      const double da = uses_a ? std::abs(s.a1 - s.a2) : 0.0;
      const double denom = std::abs(s.x1 - s.x2) + dm + da;
      if (denom == 0.0) continue;
      const double f1 = eval(c, s.theta, s.t, s.x1, mu1, s.a1);
      const double f2 = eval(c, s.theta, s.t, s.x2, mu2, uses_a ? s.a2 : s.a1);
      const double ratio = std::abs(f1 - f2) / denom;
      auto& w = worst[static_cast<std::size_t>(c)];
      if (!(ratio <= w.ratio)) w = {names[c], ratio, !std::isfinite(ratio), s.theta, s.t, s.x1, s.x2};
      if (dm == 0.0 && da == 0.0 && ratio > worst_x_ratio[static_cast<std::size_t>(c)]) {
        worst_x_ratio[static_cast<std::size_t>(c)] = ratio;
        worst_x_only[static_cast<std::size_t>(c)] = s;
      }
    }
    const double sigma = problem.vol(s.theta, s.t, s.x1, mu1);
    min_sigma_l = std::min(min_sigma_l, std::abs(sigma) * L);

    const double p = (2.0 * unit(rng) - 1.0) * 2.0 * L;
    const double H = triple.hamiltonian(s.theta, s.t, s.x1, p, mu1);
    const double a_star = triple.feedback(s.theta, s.t, s.x1, p, mu1);
    const double dph = triple.hamiltonian_grad(s.theta, s.t, s.x1, p, mu1);
    const double b_star = problem.drift(s.theta, s.t, s.x1, mu1, a_star);
    report.envelope_error = std::max(report.envelope_error, std::abs(dph - b_star));
    const double h_star = b_star * p + problem.running_cost(s.theta, s.t, s.x1, mu1, a_star);
    report.argmax_gap = std::max(report.argmax_gap, std::abs(H - h_star));
    for (int j = 0; j < 4; ++j) {
      const double a = a_lo + unit(rng) * (a_hi - a_lo);
      const double h = problem.drift(s.theta, s.t, s.x1, mu1, a) * p + problem.running_cost(s.theta, s.t, s.x1, mu1, a);
      report.sup_gap = std::max(report.sup_gap, h - H);
    }
  }

  // Bisection on the steepest state-only pair exposes jumps: the ratio diverges as the pair shrinks.
  for (int c = 0; c < kCount; ++c) {
    if (worst_x_ratio[static_cast<std::size_t>(c)] < 0.0) continue;
    const Sample& s = worst_x_only[static_cast<std::size_t>(c)];
    const auto& mu = pool[s.m1];
    double lo = std::min(s.x1, s.x2);
    double hi = std::max(s.x1, s.x2);
    double f_lo = eval(c, s.theta, s.t, lo, mu, s.a1);
    double f_hi = eval(c, s.theta, s.t, hi, mu, s.a1);
    for (int it = 0; it < 60 && hi - lo > 1e-14 * width; ++it) {
      const double mid = 0.5 * (lo + hi);
      const double f_mid = eval(c, s.theta, s.t, mid, mu, s.a1);
      if (std::abs(f_mid - f_lo) >= std::abs(f_hi - f_mid)) {
        hi = mid;
        f_hi = f_mid;
      } else {
        lo = mid;
        f_lo = f_mid;
      }
    }
    const double refined = std::abs(f_hi - f_lo) / (hi - lo);
    auto& w = worst[static_cast<std::size_t>(c)];
    if (refined > w.ratio) w = {names[c], refined, refined > 1e3 * L, s.theta, s.t, lo, hi};
    if (refined > 1e3 * L) w.unbounded = true;
  }

  report.ratios = worst;
  report.min_vol_times_l = min_sigma_l;
  for (const auto& w : worst) {
    if (w.unbounded) {
      report.failures.push_back(w.coefficient + ": Lipschitz ratio unbounded (discontinuity near x = " +
                                std::to_string(w.x1) + ")");
    } else if (w.ratio > 1.01 * L) {
      std::ostringstream os;
      os << w.coefficient << ": Lipschitz ratio " << w.ratio << " exceeds 1.01 L = " << 1.01 * L;
      report.failures.push_back(os.str());
    }
  }
  if (min_sigma_l < 1.0 - 1e-12) {
    report.failures.push_back("ellipticity: min sigma * L = " + std::to_string(min_sigma_l) + " < 1");
  }
  if (report.envelope_error > 1e-8) report.failures.push_back("envelope identity violated");
  if (report.sup_gap > 1e-8) report.failures.push_back("H is not an upper bound of b p + F");
  if (report.argmax_gap > 1e-8) report.failures.push_back("H is not attained at a*");
  report.passed = report.failures.empty();
  return report;
}

}  // namespace hmfg
