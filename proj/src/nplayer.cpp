#include "hmfg/nplayer.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <sstream>

#include "hmfg/errors.hpp"
#include "hmfg/numerics.hpp"
#include "hmfg/parallel.hpp"
#include "hmfg/wasserstein.hpp"

namespace hmfg {

NPlayerConfig NPlayerConfig::balanced(Index n_players, Index n_types, double dt, Index n_paths, std::uint64_t seed) {
  NPlayerConfig c;
  c.n_players = n_players;
  c.n_types = n_types;
  c.dt = dt;
  c.n_paths = n_paths;
  c.seed = seed;
  if (n_types > 0) {
    for (Index l = 0; l < n_types; ++l) c.cluster_sizes.push_back(n_players / n_types + (l < n_players % n_types ? 1 : 0));
  }
  return c;
}

Index NPlayerConfig::n_min() const {
  return cluster_sizes.empty() ? 0 : *std::min_element(cluster_sizes.begin(), cluster_sizes.end());
}

void NPlayerConfig::validate() const {
  if (n_types < 1) throw ValidationError("NPlayerConfig: K must be positive");
  if (static_cast<Index>(cluster_sizes.size()) != n_types) {
    throw ValidationError("NPlayerConfig: expected " + std::to_string(n_types) + " cluster sizes, got " +
                          std::to_string(cluster_sizes.size()));
  }
  Index total = 0;
  for (Index s : cluster_sizes) {
    if (s < 1) throw ValidationError("NPlayerConfig: cluster sizes must be positive");
    total += s;
  }
  if (total != n_players) {
    throw ValidationError("NPlayerConfig: cluster sizes sum to " + std::to_string(total) + ", N = " +
                          std::to_string(n_players));
  }
  if (!(dt > 0.0)) throw ValidationError("NPlayerConfig: dt must be positive");
  if (n_paths < 1) throw ValidationError("NPlayerConfig: n_paths must be at least 1");
  if (workers < 1) throw ValidationError("NPlayerConfig: workers must be at least 1");
}

std::vector<Index> cluster_labels(const NPlayerConfig& config) {
  config.validate();
  std::vector<Index> labels;
  labels.reserve(static_cast<std::size_t>(config.n_players));
  for (Index l = 0; l < config.n_types; ++l) {
    labels.insert(labels.end(), static_cast<std::size_t>(config.cluster_sizes[static_cast<std::size_t>(l)]), l);
  }
  return labels;
}

std::vector<Feedback> lift_strategy(const EquilibriumSolution& solution, const NPlayerConfig& config) {
  if (solution.n_types() != config.n_types) {
    throw ValidationError("lift_strategy: solution has " + std::to_string(solution.n_types()) +
                          " types, configuration has K = " + std::to_string(config.n_types));
  }
  std::vector<Feedback> per_type;
  for (Index l = 0; l < config.n_types; ++l) per_type.push_back(solution.feedback_fn(l));
  std::vector<Feedback> out;
  for (Index l : cluster_labels(config)) out.push_back(per_type[static_cast<std::size_t>(l)]);
  return out;
}

std::vector<double> draw_initial_states(const MeasureEnsemble& mu0, const NPlayerConfig& config, Index replication) {
  if (mu0.n_types() != config.n_types) throw ValidationError("draw_initial_states: K mismatch");
  const CounterRng rng(config.seed);
  const auto labels = cluster_labels(config);
  std::vector<double> x0(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const double u = rng.uniform2(Stream::kInitialState, static_cast<std::uint32_t>(replication),
                                  static_cast<std::uint32_t>(i), 0)
                         .first;
    x0[i] = mu0.grid_measure(labels[i]).quantile(u);
  }
  return x0;
}

MeasureEnsemble empirical_ensemble(const Eigen::Ref<const Vector>& states, const std::vector<Index>& labels,
                                   const std::vector<double>& type_points) {
  const auto k = type_points.size();
  std::vector<std::vector<double>> atoms(k);
  for (std::size_t i = 0; i < labels.size(); ++i) atoms[static_cast<std::size_t>(labels[i])].push_back(states[static_cast<Index>(i)]);
  std::vector<Measure> ms;
  ms.reserve(k);
  for (std::size_t l = 0; l < k; ++l) {
    if (atoms[l].empty()) throw ValidationError("empirical_ensemble: cluster " + std::to_string(l) + " is empty");
    ms.emplace_back(EmpiricalMeasure::uniform(std::move(atoms[l]), "cluster " + std::to_string(l)));
  }
  return MeasureEnsemble(std::move(ms), type_points);
}

PathBundle simulate_nplayer(const HMFGProblem& problem, const std::vector<Feedback>& feedbacks,
                            const std::vector<double>& x0, const NPlayerConfig& config, Index replication) {
  config.validate();
  check_problem(problem);
  const Index n = config.n_players;
  if (static_cast<Index>(feedbacks.size()) != n || static_cast<Index>(x0.size()) != n) {
    throw ValidationError("simulate_nplayer: need one feedback and one initial state per player");
  }
  const double horizon = problem.horizon;
  if (config.dt > horizon / 10.0 * (1.0 + 1e-12)) throw ValidationError("simulate_nplayer: dt must be at most T/10");
  const auto steps = static_cast<Index>(std::llround(horizon / config.dt));
  if (std::abs(static_cast<double>(steps) * config.dt - horizon) > 1e-9 * horizon) {
    throw ValidationError("simulate_nplayer: dt must divide the horizon");
  }
  const double dt = horizon / static_cast<double>(steps);
  const double sqdt = std::sqrt(dt);
  const auto labels = cluster_labels(config);
  const auto type_points = MeasureEnsemble::uniform_type_points(config.n_types);
  const CounterRng rng(config.seed);

  PathBundle out;
  out.labels = labels;
  out.seed = config.seed;
  out.replication = replication;
  out.times.resize(static_cast<std::size_t>(steps + 1));
  out.states.resize(steps + 1, n);
  out.payoffs.assign(static_cast<std::size_t>(n), 0.0);
  for (Index i = 0; i < n; ++i) {
    if (!std::isfinite(x0[static_cast<std::size_t>(i)])) throw ValidationError("simulate_nplayer: initial state is not finite");
    out.states(0, i) = x0[static_cast<std::size_t>(i)];
  }
  std::vector<detail::NeumaierSum<double>> running(static_cast<std::size_t>(n));
  for (Index s = 0; s < steps; ++s) {
    const double t = static_cast<double>(s) * dt;
    out.times[static_cast<std::size_t>(s)] = t;
    const MeasureEnsemble phi = empirical_ensemble(out.states.row(s).transpose(), labels, type_points);
    for (Index i = 0; i < n; ++i) {
      const double theta = type_points[static_cast<std::size_t>(labels[static_cast<std::size_t>(i)])];
      const double x = out.states(s, i);
      const double a = feedbacks[static_cast<std::size_t>(i)](t, x);
      const double b = problem.drift(theta, t, x, phi, a);
      const double sig = problem.vol(theta, t, x, phi);
      running[static_cast<std::size_t>(i)].add(problem.running_cost(theta, t, x, phi, a) * dt);
      const double z = rng.normal(Stream::kIncrement, static_cast<std::uint32_t>(replication),
                                  static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(s));
      const double next = x + b * dt + sig * sqdt * z;
      if (!std::isfinite(next)) {
        throw SolverError("simulate_nplayer: non-finite state for player " + std::to_string(i) + " at step " +
                          std::to_string(s + 1));
      }
      out.states(s + 1, i) = next;
    }
  }
  out.times.back() = horizon;
  const MeasureEnsemble phi_t = empirical_ensemble(out.states.row(steps).transpose(), labels, type_points);
  for (Index i = 0; i < n; ++i) {
    const double theta = type_points[static_cast<std::size_t>(labels[static_cast<std::size_t>(i)])];
    out.payoffs[static_cast<std::size_t>(i)] =
        running[static_cast<std::size_t>(i)].value() + problem.terminal_cost(theta, out.states(steps, i), phi_t);
  }
  return out;
}

namespace {

struct MeanSe {
  double mean;
  double half_width;
};

MeanSe mean_ci(const std::vector<double>& v) {
  detail::NeumaierSum<double> s;
  for (double x : v) s.add(x);
  const auto n = static_cast<double>(v.size());
  const double m = s.value() / n;
  if (v.size() < 2) return {m, 0.0};
  detail::NeumaierSum<double> ss;
  for (double x : v) ss.add((x - m) * (x - m));
  return {m, 1.96 * std::sqrt(ss.value() / (n - 1.0) / n)};
}

// rho_star at time t: the node itself when t is a node, otherwise linear interpolation of the densities.
MeasureEnsemble flow_at(const EnsembleFlow& rho, double t) {
  const Index n = rho.node_at_or_before(t);
  const double tol = 1e-9 * std::max(1.0, std::abs(t));
  if (std::abs(rho.time(n) - t) <= tol) return rho.snapshot(n);
  if (n + 1 < rho.n_times() && std::abs(rho.time(n + 1) - t) <= tol) return rho.snapshot(n + 1);
  if (n + 1 >= rho.n_times()) return rho.back();
  const double w = (t - rho.time(n)) / (rho.time(n + 1) - rho.time(n));
  std::vector<Measure> ms;
  for (Index l = 0; l < rho.n_types(); ++l) {
    Vector d = (1.0 - w) * rho.density(n, l) + w * rho.density(n + 1, l);
    ms.emplace_back(GridMeasure::normalized(rho.grid(), std::move(d), "interpolated law"));
  }
  return MeasureEnsemble(std::move(ms), rho.type_points());
}

}  // namespace

ChaosReport chaos_statistic(const std::vector<EnsembleFlow>& samples, const EnsembleFlow& rho_star) {
  if (samples.empty()) throw ValidationError("chaos_statistic: no replications");
  const Index nt = samples.front().n_times();
  for (const auto& s : samples) {
    if (s.n_times() != nt || s.times() != samples.front().times()) {
      throw ValidationError("chaos_statistic: replications use different time nodes");
    }
    if (s.n_types() != rho_star.n_types()) throw ValidationError("chaos_statistic: K mismatch");
  }
  if (rho_star.is_grid()) {
    for (const auto& s : samples) {
      if (s.is_grid() && !(s.grid() == rho_star.grid())) throw ValidationError("chaos_statistic: grid mismatch");
    }
  }
  std::vector<MeasureEnsemble> target;
  for (Index n = 0; n < nt; ++n) target.push_back(flow_at(rho_star, samples.front().time(n)));
  ChaosReport rep;
  rep.times = samples.front().times();
  rep.mean_d1_sq.assign(static_cast<std::size_t>(nt), 0.0);
  rep.replications = static_cast<Index>(samples.size());
  rep.n_types = rho_star.n_types();
  std::vector<std::vector<double>> sq(static_cast<std::size_t>(nt), std::vector<double>(samples.size()));
  for (std::size_t r = 0; r < samples.size(); ++r) {
    for (Index n = 0; n < nt; ++n) {
      const double d = ensemble_distance(samples[r].snapshot(n), target[static_cast<std::size_t>(n)], 1);
      sq[static_cast<std::size_t>(n)][r] = d * d;
    }
  }
  Index arg = 0;
  for (Index n = 0; n < nt; ++n) {
    const MeanSe m = mean_ci(sq[static_cast<std::size_t>(n)]);
    rep.mean_d1_sq[static_cast<std::size_t>(n)] = m.mean;
    if (n == 0 || m.mean > rep.statistic) {
      rep.statistic = m.mean;
      rep.ci_half_width = m.half_width;
      arg = n;
    }
  }
  rep.argmax_time = rep.times[static_cast<std::size_t>(arg)];
  rep.rho_k_proxy = 1.0 / static_cast<double>(rep.n_types);
  return rep;
}

ChaosReport chaos_statistic(const std::vector<PathBundle>& bundles, const EnsembleFlow& rho_star,
                            const NPlayerConfig& config) {
  config.validate();
  if (bundles.empty()) throw ValidationError("chaos_statistic: no replications");
  const auto type_points = MeasureEnsemble::uniform_type_points(config.n_types);
  std::vector<EnsembleFlow> samples;
  for (const auto& b : bundles) {
    if (b.states.cols() != config.n_players) throw ValidationError("chaos_statistic: bundle has the wrong N");
    std::vector<MeasureEnsemble> snaps;
    for (Index n = 0; n < b.states.rows(); ++n) snaps.push_back(empirical_ensemble(b.states.row(n).transpose(), b.labels, type_points));
    samples.emplace_back(b.times, std::move(snaps));
  }
  ChaosReport rep = chaos_statistic(samples, rho_star);
  const MeasureEnsemble& mu0 = rho_star.front();
  const auto k = static_cast<double>(config.n_types);
  std::vector<double> w1(bundles.size()), mom(bundles.size());
  for (std::size_t r = 0; r < bundles.size(); ++r) {
    const MeasureEnsemble& phi0 = samples[r].front();
    double a = 0.0;
    double b = 0.0;
    for (Index l = 0; l < config.n_types; ++l) {
      const double d = wasserstein1(phi0[l], mu0[l]);
      a += d * d / k;
      const auto& e = std::get<EmpiricalMeasure>(phi0[l]);
      double q4 = 0.0;
      for (std::size_t j = 0; j < e.atoms().size(); ++j) q4 += e.weights()[j] * std::pow(e.atoms()[j], 4);
      b += std::sqrt(q4) / k;
    }
    w1[r] = a;
    mom[r] = b;
  }
  rep.delta_w1_sq = mean_ci(w1).mean;
  rep.delta_moment = mean_ci(mom).mean;
  rep.n_players = config.n_players;
  rep.n_min = config.n_min();
  rep.cluster_term = 1.0 / (k * std::pow(static_cast<double>(config.n_min()), 3));
  rep.seed = config.seed;
  return rep;
}

ChaosReport run_chaos(const HMFGProblem& problem, const EquilibriumSolution& solution, const NPlayerConfig& config) {
  config.validate();
  const auto feedbacks = lift_strategy(solution, config);
  std::vector<std::optional<PathBundle>> slots(static_cast<std::size_t>(config.n_paths));
  parallel_for(config.n_paths, config.workers, [&](Index r) {
    const auto x0 = draw_initial_states(solution.rho_star.front(), config, r);
    slots[static_cast<std::size_t>(r)] = simulate_nplayer(problem, feedbacks, x0, config, r);
  });
  std::vector<PathBundle> bundles;
  for (auto& s : slots) bundles.push_back(std::move(*s));
  return chaos_statistic(bundles, solution.rho_star, config);
}

ExploitabilityReport exploitability_of(const HMFGProblem& problem, const EquilibriumSolution& solution,
                                       const NPlayerConfig& config, Index deviating_player,
                                       const Feedback& deviation) {
  config.validate();
  if (deviating_player < 0 || deviating_player >= config.n_players) {
    throw ValidationError("exploitability: deviating player index out of range");
  }
  const auto eq = lift_strategy(solution, config);
  auto dev = eq;
  dev[static_cast<std::size_t>(deviating_player)] = deviation;
  const auto labels = cluster_labels(config);
  const Index l = labels[static_cast<std::size_t>(deviating_player)];
  const auto reps = static_cast<std::size_t>(config.n_paths);
  std::vector<double> j_eq(reps), j_dev(reps), gain(reps), j_mf(reps);
  parallel_for(config.n_paths, config.workers, [&](Index r) {
    const auto x0 = draw_initial_states(solution.rho_star.front(), config, r);
    const PathBundle a = simulate_nplayer(problem, eq, x0, config, r);
    const PathBundle b = simulate_nplayer(problem, dev, x0, config, r);
    const auto i = static_cast<std::size_t>(deviating_player);
    const auto ri = static_cast<std::size_t>(r);
    j_eq[ri] = a.payoffs[i];
    j_dev[ri] = b.payoffs[i];
    gain[ri] = b.payoffs[i] - a.payoffs[i];
    j_mf[ri] = solution.values[static_cast<std::size_t>(l)].value(solution.rho_star.time(0), x0[i]);
  });
  ExploitabilityReport rep;
  rep.player = deviating_player;
  rep.replications = config.n_paths;
  rep.j_eq = mean_ci(j_eq).mean;
  rep.j_dev = mean_ci(j_dev).mean;
  const MeanSe g = mean_ci(gain);
  rep.gain_mean = g.mean;
  rep.gain_ci_half_width = g.half_width;
  rep.eps_hat = std::max(0.0, g.mean);
  rep.j_mean_field = mean_ci(j_mf).mean;
  return rep;
}

Feedback own_influence_best_response(const HMFGProblem& problem, const EquilibriumSolution& solution,
                                     const NPlayerConfig& config, Index deviating_player) {
  config.validate();
  const auto labels = cluster_labels(config);
  if (deviating_player < 0 || deviating_player >= config.n_players) {
    throw ValidationError("exploitability: deviating player index out of range");
  }
  const Index l = labels[static_cast<std::size_t>(deviating_player)];
  const double weight = 1.0 / static_cast<double>(config.cluster_sizes[static_cast<std::size_t>(l)]);
  auto atomize = [l, weight](const MeasureEnsemble& mu, double x) {
    std::vector<Measure> ms = mu.measures();
    ms[static_cast<std::size_t>(l)] = MixedMeasure(mu.grid_measure(l), EmpiricalMeasure({x}, {1.0}), weight);
    return MeasureEnsemble(std::move(ms), mu.type_points());
  };
  const HamiltonianTriple ham = resolve_hamiltonian(problem);
  HMFGProblem dev = problem;
  dev.name = problem.name + " (own influence)";
  dev.drift = [problem, atomize](double th, double t, double x, const MeasureEnsemble& mu, double a) {
    return problem.drift(th, t, x, atomize(mu, x), a);
  };
  dev.vol = [problem, atomize](double th, double t, double x, const MeasureEnsemble& mu) {
    return problem.vol(th, t, x, atomize(mu, x));
  };
  dev.running_cost = [problem, atomize](double th, double t, double x, const MeasureEnsemble& mu, double a) {
    return problem.running_cost(th, t, x, atomize(mu, x), a);
  };
  dev.terminal_cost = [problem, atomize](double th, double x, const MeasureEnsemble& mu) {
    return problem.terminal_cost(th, x, atomize(mu, x));
  };
  dev.hamiltonian = [ham, atomize](double th, double t, double x, double p, const MeasureEnsemble& mu) {
    return ham.hamiltonian(th, t, x, p, atomize(mu, x));
  };
  dev.hamiltonian_grad = [ham, atomize](double th, double t, double x, double p, const MeasureEnsemble& mu) {
    return ham.hamiltonian_grad(th, t, x, p, atomize(mu, x));
  };
  dev.feedback = [ham, atomize](double th, double t, double x, double p, const MeasureEnsemble& mu) {
    return ham.feedback(th, t, x, p, atomize(mu, x));
  };
  const double theta = solution.rho_star.type_points()[static_cast<std::size_t>(l)];
  auto value = std::make_shared<const ValueField>(solve_hjb(dev, theta, solution.rho_star, solution.grids));
  auto flow = std::make_shared<const EnsembleFlow>(solution.rho_star);
  auto fb = dev.feedback;
  return [value, flow, fb, theta](double t, double x) {
    return fb(theta, t, x, value->gradient(t, x), flow->snapshot(flow->node_at_or_before(t)));
  };
}

ExploitabilityReport exploitability(const HMFGProblem& problem, const EquilibriumSolution& solution,
                                    const NPlayerConfig& config, Index deviating_player) {
  const Feedback dev = own_influence_best_response(problem, solution, config, deviating_player);
  return exploitability_of(problem, solution, config, deviating_player, dev);
}

}  // namespace hmfg
