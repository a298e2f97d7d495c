#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "hmfg/equilibrium.hpp"
#include "hmfg/lq.hpp"
#include "hmfg/parallel.hpp"

namespace hmfg {

/// State domain defaults to an automatic box around the initial laws when x_min / x_max are absent.
struct GridSpec {
  Index n_x = 401;
  Index n_t = 400;
  std::optional<double> x_min;
  std::optional<double> x_max;
};

struct ProblemSpec {
  /// Built-in name, empty for a custom family.
  std::string builtin;
  /// Effective family parameters: the preset merged with any overrides.
  nlohmann::json params;
};

struct BuiltProblem {
  HMFGProblem problem;
  std::string family;
  std::optional<LQBenchmark> lq;
  Vector init_mean;
  Vector init_std;

  Index n_types() const { return init_mean.size(); }
  MeasureEnsemble initial(const StateGrid& grid) const;
};

struct NPlayerSpec {
  Index n = 40;
  /// Empty means balanced clusters.
  std::vector<Index> clusters;
  double dt = 0.01;
  Index paths = 20;
  std::vector<Index> ladder = {40, 160, 640};
  Index deviating_player = 0;
};

struct ItoSpec {
  Index particles = 100000;
  double dt = 1e-3;
  Index seeds = 10;
};

struct DecouplingSpec {
  Index paths = 20000;
  std::vector<double> dts = {4e-3, 2e-3, 1e-3};
  Index checkpoints = 10;
};

struct MasterSpec {
  double analytic_tol = 1e-6;
  double fd_tol = 1e-3;
  Index random_means = 8;
  double fd_step = 1e-5;
};

struct ValidateSpec {
  Index samples = 2000;
};

struct RunConfig {
  ProblemSpec problem;
  GridSpec grid;
  FixedPointConfig fixed_point;
  NPlayerSpec nplayer;
  ItoSpec ito;
  DecouplingSpec decoupling;
  MasterSpec master;
  ValidateSpec validate;
  std::string output = "hmfg-out";
  std::uint64_t seed = 0;
  /// True when no seed was given and one was drawn at load time.
  bool seed_generated = false;
  /// Defaults to the available hardware parallelism; outputs do not depend on it.
  int workers = default_workers();
  std::string log_level = "info";
};

std::vector<std::string> builtin_names();
/// Family parameters of a built-in problem; throws ConfigError for unknown names.
nlohmann::json builtin_params(std::string_view name);

/// Parses a JSON config. Unknown keys, type mismatches and out-of-range values raise ConfigError naming the
/// field; syntax errors report line and column.
RunConfig parse_config(std::string_view text, std::string_view source = "<config>");
RunConfig load_config(const std::filesystem::path& path);
/// Configuration with every field at its default and the given built-in problem.
RunConfig default_config(std::string_view builtin = "lq-k4");

/// Re-checks ranges after flag overrides.
void validate_config(const RunConfig& config);

/// The effective configuration, re-parseable by parse_config.
nlohmann::json to_json(const RunConfig& config);

BuiltProblem build_problem(const ProblemSpec& spec);
SolverGrids make_grids(const RunConfig& config, const BuiltProblem& problem);

/// Sub-seed for a named purpose (splitmix64 of the seed, an FNV-1a hash of the purpose and the index).
std::uint64_t derive_seed(std::uint64_t seed, std::string_view purpose, std::uint64_t index = 0);

}  // namespace hmfg
