#include "commands.hpp"

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <Eigen/Core>
#include <chrono>
#include <cmath>
#include <fstream>
#include <sstream>

#include "hmfg/errors.hpp"
#include "hmfg/mfcalculus.hpp"
#include "hmfg/nplayer.hpp"
#include "hmfg/parallel.hpp"
#include "hmfg/report_io.hpp"
#include "hmfg/wasserstein.hpp"

namespace hmfg::cli {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr const char* kVersion = "0.1.0";

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

class Manifest {
 public:
  Manifest(std::string command, const RunConfig& config) : command_(std::move(command)), config_(config) {}

  fs::path file(const std::string& name) {
    outputs_.push_back(name);
    return fs::path(config_.output) / name;
  }
  void time(const std::string& what, double seconds) { wall_[what] = seconds; }

  void write() const {
    std::ostringstream eigen;
    eigen << EIGEN_WORLD_VERSION << '.' << EIGEN_MAJOR_VERSION << '.' << EIGEN_MINOR_VERSION;
    const json j = {{"command", command_},
                    {"config", to_json(config_)},
                    {"seed", config_.seed},
                    {"seed_generated", config_.seed_generated},
                    {"versions",
                     {{"hmfg", kVersion}, {"eigen", eigen.str()}, {"compiler", __VERSION__}, {"cli11", CLI11_VERSION}}},
                    {"wall_times", wall_},
                    {"outputs", outputs_}};
    write_json(fs::path(config_.output) / "manifest.json", j);
  }

 private:
  std::string command_;
  const RunConfig& config_;
  std::vector<std::string> outputs_;
  json wall_ = json::object();
};

FixedPointConfig fixed_point(const RunConfig& config) {
  FixedPointConfig fp = config.fixed_point;
  fp.workers = config.workers;
  return fp;
}

json oracle_comparison(const LQBenchmark& bench, const EquilibriumSolution& sol) {
  try {
    const RiccatiSolution ric = riccati_oracle(bench, 4 * (sol.grids.time.size() - 1));
    const EnsembleFlow flow = ric.flow(sol.grids);
    // Value errors are reported on the middle two thirds of the domain, away from the reflecting edges.
    const StateGrid& g = sol.grids.space;
    const double margin = (g.x_max() - g.x_min()) / 6.0;
    double worst = 0.0;
    for (Index l = 0; l < sol.n_types(); ++l) {
      const ValueField exact = ric.value_field(l, sol.grids);
      const ValueField& v = sol.values[static_cast<std::size_t>(l)];
      for (Index n = 0; n < v.n_times(); ++n) {
        for (Index i = 0; i < g.size(); ++i) {
          const double x = g.node(i);
          if (x < g.x_min() + margin || x > g.x_max() - margin) continue;
          worst = std::max(worst, std::abs(v.u(n, i) - exact.u(n, i)));
        }
      }
    }
    return {{"d1_flow", flow_distance(sol.rho_star, flow, 1)},
            {"max_value_error_interior", worst},
            {"interior", {g.x_min() + margin, g.x_max() - margin}}};
  } catch (const SolverError& e) {
    return {{"error", e.what()}};
  }
}

EquilibriumSolution solve(const RunConfig& config, const BuiltProblem& bp, const SolverGrids& grids) {
  const MeasureEnsemble mu0 = bp.initial(grids.space);
  return solve_equilibrium(bp.problem, mu0, grids, fixed_point(config));
}

EquilibriumSolution obtain_solution(const RunConfig& config, const BuiltProblem& bp, const SolverGrids& grids,
                                    const SolutionSource& source, Manifest& manifest) {
  if (source.solve_inline) {
    const auto start = Clock::now();
    EquilibriumSolution sol = solve(config, bp, grids);
    manifest.time("solve", seconds_since(start));
    if (!sol.report.converged) spdlog::warn("in-line solve did not converge; using the best iterate");
    return sol;
  }
  const fs::path dir = source.directory.value_or(fs::path(config.output));
  const fs::path flow_path = dir / "flow.csv";
  const fs::path values_path = dir / "values.csv";
  for (const auto& p : {flow_path, values_path}) {
    if (!fs::exists(p)) {
      throw ValidationError("missing solution artifact '" + p.string() + "' (run `hmfg solve` first or pass --solve)");
    }
  }
  const auto type_points = MeasureEnsemble::uniform_type_points(bp.n_types());
  SolveReport report;
  report.converged = true;
  const fs::path report_path = dir / "report.json";
  if (fs::exists(report_path)) {
    std::ifstream in(report_path);
    const json j = json::parse(in);
    if (j.contains("report")) report.converged = j["report"].value("converged", true);
  }
  return {bp.problem, grids, read_flow_csv(flow_path, grids, type_points), read_values_csv(values_path, grids, type_points),
          report};
}

NPlayerConfig nplayer_config(const RunConfig& config, Index n_types, Index n_players) {
  NPlayerConfig c = NPlayerConfig::balanced(n_players, n_types, config.nplayer.dt, config.nplayer.paths,
                                            derive_seed(config.seed, "nplayer"));
  if (!config.nplayer.clusters.empty()) {
    Index total = 0;
    for (Index s : config.nplayer.clusters) total += s;
    if (total == n_players) c.cluster_sizes = config.nplayer.clusters;
  }
  c.workers = config.workers;
  c.validate();
  return c;
}

}  // namespace

int cmd_solve(const RunConfig& config) {
  Manifest manifest("solve", config);
  const BuiltProblem bp = build_problem(config.problem);
  const SolverGrids grids = make_grids(config, bp);
  spdlog::info("solve: {} with K = {}, n_x = {}, n_t = {}", bp.problem.name, bp.n_types(), grids.space.size(),
               grids.time.size());
  const auto start = Clock::now();
  const EquilibriumSolution sol = solve(config, bp, grids);
  manifest.time("solve", seconds_since(start));
  write_ensemble_csv(manifest.file("initial.csv"), sol.rho_star.front());
  write_flow_csv(manifest.file("flow.csv"), sol.rho_star);
  write_values_csv(manifest.file("values.csv"), sol.values);
  const CflRecord cfl = cfl_record(grids.time, grids.space, bp.problem.lipschitz);
  json j = {{"problem", bp.problem.name},
            {"grid", grid_json(grids)},
            {"fixed_point", to_json(config)["fixed_point"]},
            {"report", to_json(sol.report)},
            {"cfl", {{"dt", cfl.dt}, {"dx", cfl.dx}, {"bound", cfl.bound}, {"within", cfl.within}}}};
  if (bp.lq) j["oracle"] = oracle_comparison(*bp.lq, sol);
  write_json(manifest.file("report.json"), j);
  manifest.write();
  spdlog::info("solve: converged = {}, iterations = {}, certificate = {:.3e}", sol.report.converged,
               sol.report.iterations, sol.report.certificate);
  return sol.report.converged ? kSuccess : kNotConverged;
}

int cmd_simulate(const RunConfig& config, const SolutionSource& source) {
  Manifest manifest("simulate", config);
  const BuiltProblem bp = build_problem(config.problem);
  const SolverGrids grids = make_grids(config, bp);
  const EquilibriumSolution sol = obtain_solution(config, bp, grids, source, manifest);
  const NPlayerConfig nc = nplayer_config(config, bp.n_types(), config.nplayer.n);
  const auto feedbacks = lift_strategy(sol, nc);
  const auto start = Clock::now();
  std::vector<std::optional<PathBundle>> slots(static_cast<std::size_t>(nc.n_paths));
  parallel_for(nc.n_paths, nc.workers, [&](Index r) {
    const auto x0 = draw_initial_states(sol.rho_star.front(), nc, r);
    slots[static_cast<std::size_t>(r)] = simulate_nplayer(bp.problem, feedbacks, x0, nc, r);
  });
  std::vector<PathBundle> bundles;
  for (auto& s : slots) bundles.push_back(std::move(*s));
  const ChaosReport chaos = chaos_statistic(bundles, sol.rho_star, nc);
  manifest.time("simulate", seconds_since(start));
  std::vector<double> cluster_payoff(static_cast<std::size_t>(nc.n_types), 0.0);
  for (const auto& b : bundles) {
    for (std::size_t i = 0; i < b.payoffs.size(); ++i) {
      const auto l = static_cast<std::size_t>(b.labels[i]);
      cluster_payoff[l] += b.payoffs[i] / static_cast<double>(nc.cluster_sizes[l] * nc.n_paths);
    }
  }
  write_paths_csv(manifest.file("paths.csv"), bundles);
  write_json(manifest.file("simulate.json"),
             {{"N", nc.n_players},
              {"K", nc.n_types},
              {"clusters", nc.cluster_sizes},
              {"dt", nc.dt},
              {"paths", nc.n_paths},
              {"seed", nc.seed},
              {"mean_payoff_by_cluster", cluster_payoff},
              {"chaos", to_json(chaos)}});
  manifest.write();
  return kSuccess;
}

int cmd_chaos(const RunConfig& config, const SolutionSource& source) {
  Manifest manifest("chaos", config);
  const BuiltProblem bp = build_problem(config.problem);
  const SolverGrids grids = make_grids(config, bp);
  const EquilibriumSolution sol = obtain_solution(config, bp, grids, source, manifest);
  if (config.nplayer.ladder.empty()) throw ConfigError("nplayer.ladder: must not be empty");
  const auto start = Clock::now();
  std::vector<ChaosReport> ladder;
  json exploit = json::array();
  std::vector<double> eps;
  for (Index n : config.nplayer.ladder) {
    const NPlayerConfig nc = nplayer_config(config, bp.n_types(), n);
    if (config.nplayer.deviating_player >= n) {
      throw ConfigError("nplayer.deviating_player: index " + std::to_string(config.nplayer.deviating_player) +
                        " is out of range for N = " + std::to_string(n));
    }
    ladder.push_back(run_chaos(bp.problem, sol, nc));
    const ExploitabilityReport ex = exploitability(bp.problem, sol, nc, config.nplayer.deviating_player);
    json e = to_json(ex);
    e["N"] = n;
    exploit.push_back(e);
    eps.push_back(ex.eps_hat);
    spdlog::info("chaos: N = {}, statistic = {:.4e} +- {:.2e}, eps = {:.3e}", n, ladder.back().statistic,
                 ladder.back().ci_half_width, ex.eps_hat);
  }
  manifest.time("chaos", seconds_since(start));
  bool decreasing = true;
  bool eps_non_increasing = true;
  for (std::size_t j = 1; j < ladder.size(); ++j) {
    decreasing = decreasing && ladder[j].statistic + ladder[j].ci_half_width <
                                   ladder[j - 1].statistic - ladder[j - 1].ci_half_width;
    eps_non_increasing = eps_non_increasing && eps[j] <= eps[j - 1];
  }
  json reports = json::array();
  for (const auto& r : ladder) reports.push_back(to_json(r));
  write_ladder_csv(manifest.file("ladder.csv"), ladder);
  write_json(manifest.file("chaos.json"), {{"ladder", reports},
                                           {"exploitability", exploit},
                                           {"statistic_decreasing_beyond_ci", decreasing},
                                           {"eps_non_increasing", eps_non_increasing}});
  manifest.write();
  return kSuccess;
}

int cmd_checks(const RunConfig& config, const CheckSelection& checks) {
  Manifest manifest("checks", config);
  const BuiltProblem bp = build_problem(config.problem);
  const SolverGrids grids = make_grids(config, bp);
  json summary = json::object();
  bool all = true;
  if (checks.validate) {
    const auto start = Clock::now();
    const ValidationReport r =
        validate_problem(bp.problem, grids.space, bp.n_types(), config.validate.samples, derive_seed(config.seed, "validate"));
    manifest.time("validate", seconds_since(start));
    write_json(manifest.file("validate.json"), to_json(r));
    summary["validate"] = r.passed ? "passed" : "failed";
    for (const auto& f : r.failures) spdlog::error("validate: {}", f);
    all = all && r.passed;
  }
  if (checks.ito) {
    const auto start = Clock::now();
    ItoParams params;
    params.particles = config.ito.particles;
    params.dt = config.ito.dt;
    params.workers = config.workers;
    std::vector<std::uint64_t> seeds;
    for (Index s = 0; s < config.ito.seeds; ++s) seeds.push_back(derive_seed(config.seed, "ito", static_cast<std::uint64_t>(s)));
    json cases = json::array();
    std::string status = "passed";
    for (const ItoCase& c : builtin_ito_cases(StateGrid(-8.0, 8.0, 801))) {
      const ItoSummary s = run_ito_case(c, params, seeds);
      cases.push_back(to_json(s));
      spdlog::info("ito-check {}: lhs {:.6e}, rhs {:.6e}, se {:.2e}", s.name, s.lhs_mean, s.rhs_mean, s.combined_se);
      if (s.inconclusive) {
        if (status == "passed") status = "inconclusive";
      } else if (!s.passed) {
        status = "failed";
      }
    }
    manifest.time("ito", seconds_since(start));
    write_json(manifest.file("ito.json"), {{"cases", cases}, {"status", status}});
    summary["ito"] = status;
    all = all && status != "failed";
  }
  if (checks.master) {
    if (!bp.lq) throw ConfigError("master-check supports the lq family only");
    const auto start = Clock::now();
    MasterParams mp;
    mp.random_means = config.master.random_means;
    mp.fd_step = config.master.fd_step;
    mp.seed = derive_seed(config.seed, "master");
    const MasterResidualReport r = master_residual_lq(*bp.lq, grids, mp);
    manifest.time("master", seconds_since(start));
    const bool ok = r.max_analytic <= config.master.analytic_tol && r.max_fd <= config.master.fd_tol;
    json j = to_json(r);
    j["analytic_tol"] = config.master.analytic_tol;
    j["fd_tol"] = config.master.fd_tol;
    j["status"] = ok ? "passed" : "failed";
    write_json(manifest.file("master.json"), j);
    summary["master"] = j["status"];
    all = all && ok;
  }
  if (checks.decoupling) {
    const auto start = Clock::now();
    std::vector<double> dts = config.decoupling.dts;
    std::sort(dts.begin(), dts.end(), std::greater<>());
    const double horizon = bp.problem.horizon;
    const auto steps = static_cast<Index>(std::llround(horizon / dts.back()));
    const SolverGrids dgrids{grids.space, TimeGrid(0.0, horizon, steps + 1)};
    const EquilibriumSolution sol = bp.lq ? riccati_solution(*bp.lq, dgrids) : solve(config, bp, dgrids);
    json runs = json::array();
    std::vector<double> residuals;
    bool ok = true;
    for (double dt : dts) {
      DecouplingParams dp;
      dp.paths = config.decoupling.paths;
      dp.dt = dt;
      dp.checkpoints = config.decoupling.checkpoints;
      dp.seed = derive_seed(config.seed, "decoupling");
      dp.workers = config.workers;
      const DecouplingReport r = decoupling_residual(bp.problem, sol, dp);
      runs.push_back(to_json(r));
      residuals.push_back(r.drift_residual);
      ok = ok && r.terminal_error <= 1e-3;
    }
    std::vector<double> factors;
    for (std::size_t j = 1; j < residuals.size(); ++j) {
      factors.push_back(residuals[j - 1] / residuals[j]);
      ok = ok && factors.back() >= 1.6 && factors.back() <= 2.4;
    }
    manifest.time("decoupling", seconds_since(start));
    write_json(manifest.file("decoupling.json"), {{"runs", runs},
                                                  {"halving_factors", factors},
                                                  {"value_field", bp.lq ? "riccati" : "pde"},
                                                  {"status", ok ? "passed" : "failed"}});
    summary["decoupling"] = ok ? "passed" : "failed";
    all = all && ok;
  }
  summary["passed"] = all;
  write_json(manifest.file("checks.json"), summary);
  manifest.write();
  return all ? kSuccess : kError;
}

namespace {

struct Overrides {
  std::optional<std::string> config;
  std::optional<std::string> builtin;
  std::optional<std::string> output;
  std::optional<std::string> log_level;
  std::optional<std::uint64_t> seed;
  std::optional<int> workers;
  std::optional<Index> n_x;
  std::optional<Index> n_t;
  std::optional<double> tol;
  std::optional<int> max_iter;
  std::optional<double> damping;
  std::optional<double> delta0;
  bool split = false;
  // N-player
  std::optional<Index> n;
  std::optional<Index> k;
  std::optional<std::vector<Index>> clusters;
  std::optional<double> dt;
  std::optional<Index> paths;
  std::optional<std::vector<Index>> ladder;
  std::optional<Index> deviating;
  // checks
  std::optional<Index> particles;
  std::optional<double> ito_dt;
  std::optional<Index> seeds;
  std::optional<Index> samples;
};

void add_common(CLI::App* sub, Overrides& o) {
  sub->add_option("-c,--config", o.config, "JSON run configuration");
  sub->add_option("--builtin", o.builtin, "built-in problem (lq-k4, lq-decoupled, lq-long, congestion-k4)");
  sub->add_option("-o,--output", o.output, "output directory");
  sub->add_option("--seed", o.seed, "top-level seed");
  sub->add_option("--workers", o.workers, "worker threads")->check(CLI::PositiveNumber);
  sub->add_option("--log-level", o.log_level, "trace, debug, info, warn, error or off");
  sub->add_option("--n-x", o.n_x, "state grid nodes");
  sub->add_option("--n-t", o.n_t, "time grid nodes");
  sub->add_option("--tol", o.tol, "fixed-point tolerance");
  sub->add_option("--max-iter", o.max_iter, "fixed-point iteration cap");
  sub->add_option("--damping", o.damping, "Picard damping in (0, 1]");
  sub->add_option("--delta0", o.delta0, "window length for horizon splitting");
  sub->add_flag("--split-horizon", o.split, "solve by horizon splitting");
}

void add_nplayer(CLI::App* sub, Overrides& o) {
  sub->add_option("--n", o.n, "number of players");
  sub->add_option("--k", o.k, "number of clusters (must match the problem)");
  sub->add_option("--clusters", o.clusters, "cluster sizes")->delimiter(',');
  sub->add_option("--dt", o.dt, "Euler step");
  sub->add_option("--paths", o.paths, "Monte-Carlo replications");
}

RunConfig effective_config(const Overrides& o) {
  RunConfig c;
  if (o.config) {
    c = load_config(*o.config);
  } else {
    c = default_config(o.builtin.value_or("lq-k4"));
  }
  if (o.config && o.builtin) {
    c.problem.builtin = *o.builtin;
    c.problem.params = builtin_params(*o.builtin);
  }
  if (o.output) c.output = *o.output;
  if (o.log_level) c.log_level = *o.log_level;
  if (o.seed) {
    c.seed = *o.seed;
    c.seed_generated = false;
  }
  if (o.workers) c.workers = *o.workers;
  if (o.n_x) c.grid.n_x = *o.n_x;
  if (o.n_t) c.grid.n_t = *o.n_t;
  if (o.tol) c.fixed_point.tol = *o.tol;
  if (o.max_iter) c.fixed_point.max_iter = *o.max_iter;
  if (o.damping) c.fixed_point.damping = *o.damping;
  if (o.delta0) c.fixed_point.delta0_hint = *o.delta0;
  if (o.split) c.fixed_point.split_horizon = true;
  if (o.n) c.nplayer.n = *o.n;
  if (o.clusters) c.nplayer.clusters = *o.clusters;
  if (o.dt) c.nplayer.dt = *o.dt;
  if (o.paths) c.nplayer.paths = *o.paths;
  if (o.ladder) c.nplayer.ladder = *o.ladder;
  if (o.deviating) c.nplayer.deviating_player = *o.deviating;
  if (o.particles) c.ito.particles = *o.particles;
  if (o.ito_dt) c.ito.dt = *o.ito_dt;
  if (o.seeds) c.ito.seeds = *o.seeds;
  if (o.samples) c.validate.samples = *o.samples;
  validate_config(c);
  if (o.k) {
    const Index k = build_problem(c.problem).n_types();
    if (*o.k != k) throw ConfigError("--k " + std::to_string(*o.k) + " does not match the problem's K = " + std::to_string(k));
  }
  return c;
}

}  // namespace

int run(int argc, const char* const* argv) {
  CLI::App app{"Heterogeneous mean field game solver"};
  app.require_subcommand(1);
  Overrides o;
  SolutionSource source;
  std::string solution_dir;
  bool all_checks = false;

  auto* solve_cmd = app.add_subcommand("solve", "compute the equilibrium flow and value fields");
  auto* sim_cmd = app.add_subcommand("simulate", "simulate the N-player game under the lifted equilibrium");
  auto* chaos_cmd = app.add_subcommand("chaos", "propagation-of-chaos and exploitability ladder");
  auto* ito_cmd = app.add_subcommand("ito-check", "Monte-Carlo check of the ensemble Ito formula");
  auto* master_cmd = app.add_subcommand("master-check", "master-equation residual of an LQ problem");
  auto* validate_cmd = app.add_subcommand("validate", "audit problem assumptions");
  for (auto* sub : {solve_cmd, sim_cmd, chaos_cmd, ito_cmd, master_cmd, validate_cmd}) add_common(sub, o);
  for (auto* sub : {sim_cmd, chaos_cmd}) {
    add_nplayer(sub, o);
    sub->add_option("--solution", solution_dir, "directory holding flow.csv and values.csv from `solve`");
    sub->add_flag("--solve", source.solve_inline, "solve the equilibrium in-line");
  }
  chaos_cmd->add_option("--ladder", o.ladder, "player counts")->delimiter(',');
  chaos_cmd->add_option("--deviating-player", o.deviating, "player index for exploitability");
  for (auto* sub : {ito_cmd, validate_cmd}) {
    sub->add_option("--particles", o.particles, "particles per type for the Ito check");
    sub->add_option("--ito-dt", o.ito_dt, "time step for the Ito check");
    sub->add_option("--seeds", o.seeds, "number of seeds for the Ito check");
  }
  validate_cmd->add_option("--samples", o.samples, "random samples");
  validate_cmd->add_flag("--all", all_checks, "also run ito, master and decoupling checks");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kSuccess : kError;
  }

  try {
    const RunConfig config = effective_config(o);
    auto logger = spdlog::get("hmfg");
    if (!logger) logger = spdlog::stderr_color_mt("hmfg");
    spdlog::set_default_logger(logger);
    spdlog::set_level(spdlog::level::from_str(config.log_level));
    spdlog::info("seed {}{}", config.seed, config.seed_generated ? " (generated)" : "");
    if (!solution_dir.empty()) source.directory = solution_dir;
    if (solve_cmd->parsed()) return cmd_solve(config);
    if (sim_cmd->parsed()) return cmd_simulate(config, source);
    if (chaos_cmd->parsed()) return cmd_chaos(config, source);
    CheckSelection sel;
    if (ito_cmd->parsed()) sel = {false, true, false, false};
    if (master_cmd->parsed()) sel = {false, false, true, false};
    if (validate_cmd->parsed()) {
      const bool lq = build_problem(config.problem).lq.has_value();
      sel = {true, all_checks, all_checks && lq, all_checks};
    }
    return cmd_checks(config, sel);
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return kError;
  }
}

}  // namespace hmfg::cli
