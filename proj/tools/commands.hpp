#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "hmfg/config.hpp"

namespace hmfg::cli {

enum ExitCode : int { kSuccess = 0, kError = 1, kNotConverged = 2 };

/// Where N-player commands find the equilibrium: a previous `solve` output directory or an in-line solve.
struct SolutionSource {
  std::optional<std::filesystem::path> directory;
  bool solve_inline = false;
};

struct CheckSelection {
  bool validate = true;
  bool ito = false;
  bool master = false;
  bool decoupling = false;
};

int cmd_solve(const RunConfig& config);
int cmd_simulate(const RunConfig& config, const SolutionSource& source);
int cmd_chaos(const RunConfig& config, const SolutionSource& source);
int cmd_checks(const RunConfig& config, const CheckSelection& checks);

/// Parses the command line, runs one subcommand and maps exceptions to exit code 1.
int run(int argc, const char* const* argv);

}  // namespace hmfg::cli
