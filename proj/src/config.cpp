#include "hmfg/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "hmfg/congestion.hpp"
#include "hmfg/errors.hpp"
#include "hmfg/expression.hpp"

namespace hmfg {

using nlohmann::json;

namespace {

const std::vector<std::string> kLqKeys = {"family", "types", "cost", "coupling", "vol", "init_mean", "init_std",
                                          "horizon", "action_bound", "lipschitz", "name"};
const std::vector<std::string> kCongestionKeys = {"family", "types", "vol", "strength", "cost", "target",
                                                  "bandwidth", "init_mean", "init_std", "horizon", "action_bound",
                                                  "lipschitz", "name"};

[[noreturn]] void field_error(const std::string& path, const std::string& what) {
  throw ConfigError(path + ": " + what);
}

void check_keys(const json& obj, const std::string& path, const std::vector<std::string>& allowed) {
  if (!obj.is_object()) field_error(path, "expected an object");
  for (const auto& [key, value] : obj.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      field_error(path.empty() ? key : path + "." + key, "unknown key");
    }
  }
}

std::string join(const std::string& path, const char* key) { return path.empty() ? key : path + "." + key; }

template <class T>
void read(const json& obj, const std::string& path, const char* key, T& out) {
  const auto it = obj.find(key);
  if (it == obj.end()) return;
  try {
    out = it->template get<T>();
  } catch (const json::exception& e) {
    field_error(join(path, key), std::string("wrong type (") + it->type_name() + ")");
  }
}

template <class T>
void read(const json& obj, const std::string& path, const char* key, std::optional<T>& out) {
  const auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return;
  T v{};
  read(obj, path, key, v);
  out = v;
}

ThetaExpression expression(const json& params, const char* key) {
  const std::string path = join("problem", key);
  const auto it = params.find(key);
  if (it == params.end()) field_error(path, "missing");
  if (it->is_number()) return ThetaExpression::constant(it->get<double>());
  if (!it->is_string()) field_error(path, "expected a number or an expression string");
  try {
    return ThetaExpression::parse(it->get<std::string>());
  } catch (const ConfigError& e) {
    field_error(path, e.what());
  }
}

Vector per_type(const json& params, const char* key, Index k) {
  const ThetaExpression f = expression(params, key);
  Vector v(k);
  for (Index l = 0; l < k; ++l) {
    v[l] = f(static_cast<double>(l + 1) / static_cast<double>(k));
    if (!std::isfinite(v[l])) field_error(join("problem", key), "not finite at theta = " + std::to_string(static_cast<double>(l + 1) / static_cast<double>(k)));
  }
  return v;
}

double number(const json& params, const char* key) {
  const auto it = params.find(key);
  if (it == params.end()) field_error(join("problem", key), "missing");
  if (!it->is_number()) field_error(join("problem", key), "expected a number");
  return it->get<double>();
}

void from_json_section(const json& j, RunConfig& c) {
  check_keys(j, "", {"problem", "grid", "fixed_point", "nplayer", "checks", "output", "seed", "workers", "log_level"});
  if (const auto it = j.find("problem"); it != j.end()) {
    if (!it->is_object()) field_error("problem", "expected an object");
    json overrides = *it;
    if (const auto b = overrides.find("builtin"); b != overrides.end()) {
      if (!b->is_string()) field_error("problem.builtin", "expected a string");
      c.problem.builtin = b->get<std::string>();
      c.problem.params = builtin_params(c.problem.builtin);
      overrides.erase("builtin");
      if (overrides.contains("family") && overrides["family"] != c.problem.params["family"]) {
        field_error("problem.family", "does not match the built-in family");
      }
    } else {
      c.problem.builtin.clear();
      const auto f = overrides.find("family");
      if (f == overrides.end()) field_error("problem", "needs either 'builtin' or 'family'");
      if (!f->is_string()) field_error("problem.family", "expected a string");
      const std::string fam = f->get<std::string>();
      if (fam == "lq") {
        c.problem.params = builtin_params("lq-k4");
      } else if (fam == "congestion") {
        c.problem.params = builtin_params("congestion-k4");
      } else {
        field_error("problem.family", "unknown family '" + fam + "' (expected lq or congestion)");
      }
      c.problem.params["name"] = fam;
    }
    const std::string fam = c.problem.params["family"].get<std::string>();
    check_keys(overrides, "problem", fam == "lq" ? kLqKeys : kCongestionKeys);
    for (const auto& [key, value] : overrides.items()) c.problem.params[key] = value;
  }
  if (const auto it = j.find("grid"); it != j.end()) {
    check_keys(*it, "grid", {"n_x", "n_t", "x_min", "x_max"});
    read(*it, "grid", "n_x", c.grid.n_x);
    read(*it, "grid", "n_t", c.grid.n_t);
    read(*it, "grid", "x_min", c.grid.x_min);
    read(*it, "grid", "x_max", c.grid.x_max);
  }
  if (const auto it = j.find("fixed_point"); it != j.end()) {
    const std::string p = "fixed_point";
    check_keys(*it, p, {"tol", "max_iter", "damping", "split_horizon", "delta0_hint", "guard_bound", "window_ratio_target"});
    read(*it, p, "tol", c.fixed_point.tol);
    read(*it, p, "max_iter", c.fixed_point.max_iter);
    read(*it, p, "damping", c.fixed_point.damping);
    read(*it, p, "split_horizon", c.fixed_point.split_horizon);
    read(*it, p, "delta0_hint", c.fixed_point.delta0_hint);
    read(*it, p, "guard_bound", c.fixed_point.guard_bound);
    read(*it, p, "window_ratio_target", c.fixed_point.window_ratio_target);
  }
  if (const auto it = j.find("nplayer"); it != j.end()) {
    const std::string p = "nplayer";
    check_keys(*it, p, {"n", "clusters", "dt", "paths", "ladder", "deviating_player"});
    read(*it, p, "n", c.nplayer.n);
    read(*it, p, "clusters", c.nplayer.clusters);
    read(*it, p, "dt", c.nplayer.dt);
    read(*it, p, "paths", c.nplayer.paths);
    read(*it, p, "ladder", c.nplayer.ladder);
    read(*it, p, "deviating_player", c.nplayer.deviating_player);
  }
  if (const auto it = j.find("checks"); it != j.end()) {
    check_keys(*it, "checks", {"ito", "decoupling", "master", "validate"});
    if (const auto s = it->find("ito"); s != it->end()) {
      check_keys(*s, "checks.ito", {"particles", "dt", "seeds"});
      read(*s, "checks.ito", "particles", c.ito.particles);
      read(*s, "checks.ito", "dt", c.ito.dt);
      read(*s, "checks.ito", "seeds", c.ito.seeds);
    }
    if (const auto s = it->find("decoupling"); s != it->end()) {
      check_keys(*s, "checks.decoupling", {"paths", "dts", "checkpoints"});
      read(*s, "checks.decoupling", "paths", c.decoupling.paths);
      read(*s, "checks.decoupling", "dts", c.decoupling.dts);
      read(*s, "checks.decoupling", "checkpoints", c.decoupling.checkpoints);
    }
    if (const auto s = it->find("master"); s != it->end()) {
      check_keys(*s, "checks.master", {"analytic_tol", "fd_tol", "random_means", "fd_step"});
      read(*s, "checks.master", "analytic_tol", c.master.analytic_tol);
      read(*s, "checks.master", "fd_tol", c.master.fd_tol);
      read(*s, "checks.master", "random_means", c.master.random_means);
      read(*s, "checks.master", "fd_step", c.master.fd_step);
    }
    if (const auto s = it->find("validate"); s != it->end()) {
      check_keys(*s, "checks.validate", {"samples"});
      read(*s, "checks.validate", "samples", c.validate.samples);
    }
  }
  read(j, "", "output", c.output);
  if (const auto it = j.find("seed"); it != j.end()) {
    if (!it->is_number_unsigned()) field_error("seed", "expected a nonnegative integer");
    c.seed = it->get<std::uint64_t>();
    c.seed_generated = false;
  }
  read(j, "", "workers", c.workers);
  read(j, "", "log_level", c.log_level);
}

std::pair<std::size_t, std::size_t> line_column(std::string_view text, std::size_t byte) {
  std::size_t line = 1;
  std::size_t col = 1;
  for (std::size_t i = 0; i < std::min(byte, text.size()); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return {line, col};
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

}  // namespace

std::vector<std::string> builtin_names() { return {"lq-k4", "lq-decoupled", "lq-long", "congestion-k4"}; }

json builtin_params(std::string_view name) {
  json lq = {{"family", "lq"},
             {"types", 4},
             {"cost", "1 + theta"},
             {"coupling", "0.5 + 0.5 * theta"},
             {"vol", "0.6 + 0.4 * theta"},
             {"init_mean", "-1 + 2 * theta"},
             {"init_std", 0.5},
             {"horizon", 0.5},
             {"action_bound", 10.0},
             {"lipschitz", 25.0},
             {"name", std::string(name)}};
  if (name == "lq-k4") return lq;
  if (name == "lq-decoupled") {
    lq["coupling"] = 0.0;
    return lq;
  }
  if (name == "lq-long") {
    lq["coupling"] = "-1.5 - 1.5 * theta";
    lq["horizon"] = 2.0;
    return lq;
  }
  if (name == "congestion-k4") {
    return {{"family", "congestion"},
            {"types", 4},
            {"vol", "0.6 + 0.4 * theta"},
            {"strength", 1.0},
            {"cost", 0.5},
            {"target", "-1 + 2 * theta"},
            {"bandwidth", 0.5},
            {"init_mean", 0.0},
            {"init_std", 0.5},
            {"horizon", 0.5},
            {"action_bound", 10.0},
            {"lipschitz", 25.0},
            {"name", "congestion-k4"}};
  }
  std::string names;
  for (const auto& n : builtin_names()) names += (names.empty() ? "" : ", ") + n;
  throw ConfigError("problem.builtin: unknown built-in '" + std::string(name) + "' (available: " + names + ")");
}

RunConfig default_config(std::string_view builtin) {
  RunConfig c;
  c.problem.builtin = std::string(builtin);
  c.problem.params = builtin_params(builtin);
  std::random_device rd;
  c.seed = (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
  c.seed_generated = true;
  return c;
}

RunConfig parse_config(std::string_view text, std::string_view source) {
  json j;
  try {
    j = json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    const auto [line, col] = line_column(text, e.byte == 0 ? 0 : e.byte - 1);
    std::ostringstream os;
    os << source << ":" << line << ":" << col << ": syntax error";
    std::string what = e.what();
    if (const auto pos = what.find("syntax error"); pos != std::string::npos) os << what.substr(pos + 12);
    throw ConfigError(os.str());
  }
  RunConfig c = default_config();
  try {
    from_json_section(j, c);
    validate_config(c);
  } catch (const ConfigError& e) {
    throw ConfigError(std::string(source) + ": " + e.what());
  }
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path.string());
}

void validate_config(const RunConfig& c) {
  if (c.grid.n_x < 3) field_error("grid.n_x", "must be at least 3");
  if (c.grid.n_t < 3) field_error("grid.n_t", "must be at least 3");
  if (c.grid.x_min.has_value() != c.grid.x_max.has_value()) field_error("grid", "give both x_min and x_max or neither");
  if (c.grid.x_min && !(*c.grid.x_min < *c.grid.x_max)) field_error("grid.x_min", "must be below x_max");
  const FixedPointConfig& f = c.fixed_point;
  if (!(f.tol > 0.0)) field_error("fixed_point.tol", "must be positive");
  if (f.max_iter < 1) field_error("fixed_point.max_iter", "must be at least 1");
  if (!(f.damping > 0.0 && f.damping <= 1.0)) field_error("fixed_point.damping", "must lie in (0, 1]");
  if (f.delta0_hint && !(*f.delta0_hint > 0.0)) field_error("fixed_point.delta0_hint", "must be positive");
  if (!(f.guard_bound > 0.0)) field_error("fixed_point.guard_bound", "must be positive");
  if (!(f.window_ratio_target > 0.0 && f.window_ratio_target < 1.0)) {
    field_error("fixed_point.window_ratio_target", "must lie in (0, 1)");
  }
  const NPlayerSpec& n = c.nplayer;
  if (n.n < 1) field_error("nplayer.n", "must be positive");
  if (!(n.dt > 0.0)) field_error("nplayer.dt", "must be positive");
  if (n.paths < 1) field_error("nplayer.paths", "must be at least 1");
  for (Index v : n.ladder) {
    if (v < 1) field_error("nplayer.ladder", "entries must be positive");
  }
  for (Index v : n.clusters) {
    if (v < 1) field_error("nplayer.clusters", "entries must be positive");
  }
  if (n.deviating_player < 0) field_error("nplayer.deviating_player", "must be nonnegative");
  if (c.ito.particles < 2) field_error("checks.ito.particles", "must be at least 2");
  if (!(c.ito.dt > 0.0)) field_error("checks.ito.dt", "must be positive");
  if (c.ito.seeds < 1) field_error("checks.ito.seeds", "must be at least 1");
  if (c.decoupling.paths < 1) field_error("checks.decoupling.paths", "must be positive");
  if (c.decoupling.dts.empty()) field_error("checks.decoupling.dts", "must not be empty");
  for (double d : c.decoupling.dts) {
    if (!(d > 0.0)) field_error("checks.decoupling.dts", "entries must be positive");
  }
  if (c.decoupling.checkpoints < 1) field_error("checks.decoupling.checkpoints", "must be positive");
  if (!(c.master.analytic_tol > 0.0)) field_error("checks.master.analytic_tol", "must be positive");
  if (!(c.master.fd_tol > 0.0)) field_error("checks.master.fd_tol", "must be positive");
  if (c.master.random_means < 0) field_error("checks.master.random_means", "must be nonnegative");
  if (!(c.master.fd_step > 0.0)) field_error("checks.master.fd_step", "must be positive");
  if (c.validate.samples < 1) field_error("checks.validate.samples", "must be positive");
  if (c.workers < 1) field_error("workers", "must be at least 1");
  static const std::set<std::string> levels = {"trace", "debug", "info", "warn", "error", "off"};
  if (levels.count(c.log_level) == 0) field_error("log_level", "expected one of trace, debug, info, warn, error, off");
  build_problem(c.problem);
}

json to_json(const RunConfig& c) {
  json j;
  j["problem"] = c.problem.params;
  if (!c.problem.builtin.empty()) {
    j["problem"].erase("family");
    j["problem"]["builtin"] = c.problem.builtin;
  }
  j["grid"] = {{"n_x", c.grid.n_x}, {"n_t", c.grid.n_t}};
  if (c.grid.x_min) {
    j["grid"]["x_min"] = *c.grid.x_min;
    j["grid"]["x_max"] = *c.grid.x_max;
  }
  const FixedPointConfig& f = c.fixed_point;
  j["fixed_point"] = {{"tol", f.tol},
                      {"max_iter", f.max_iter},
                      {"damping", f.damping},
                      {"split_horizon", f.split_horizon},
                      {"delta0_hint", f.delta0_hint ? json(*f.delta0_hint) : json(nullptr)},
                      {"guard_bound", f.guard_bound},
                      {"window_ratio_target", f.window_ratio_target}};
  j["nplayer"] = {{"n", c.nplayer.n},         {"clusters", c.nplayer.clusters}, {"dt", c.nplayer.dt},
                  {"paths", c.nplayer.paths}, {"ladder", c.nplayer.ladder},     {"deviating_player", c.nplayer.deviating_player}};
  j["checks"] = {
      {"ito", {{"particles", c.ito.particles}, {"dt", c.ito.dt}, {"seeds", c.ito.seeds}}},
      {"decoupling", {{"paths", c.decoupling.paths}, {"dts", c.decoupling.dts}, {"checkpoints", c.decoupling.checkpoints}}},
      {"master",
       {{"analytic_tol", c.master.analytic_tol}, {"fd_tol", c.master.fd_tol}, {"random_means", c.master.random_means},
        {"fd_step", c.master.fd_step}}},
      {"validate", {{"samples", c.validate.samples}}}};
  j["output"] = c.output;
  j["seed"] = c.seed;
  j["workers"] = c.workers;
  j["log_level"] = c.log_level;
  return j;
}

MeasureEnsemble BuiltProblem::initial(const StateGrid& grid) const {
  std::vector<Measure> ms;
  for (Index l = 0; l < n_types(); ++l) {
    ms.emplace_back(GridMeasure::gaussian(grid, init_mean[l], init_std[l]));
  }
  return MeasureEnsemble(std::move(ms));
}

BuiltProblem build_problem(const ProblemSpec& spec) {
  const json& p = spec.params;
  if (!p.is_object() || !p.contains("family")) throw ConfigError("problem: missing family");
  const std::string family = p["family"].get<std::string>();
  const auto kj = p.find("types");
  if (kj == p.end() || !kj->is_number_integer() || kj->get<Index>() < 1) field_error("problem.types", "must be a positive integer");
  const Index k = kj->get<Index>();
  const std::string name = p.contains("name") && p["name"].is_string() ? p["name"].get<std::string>() : family;
  BuiltProblem out;
  out.family = family;
  try {
    if (family == "lq") {
      LQBenchmark b;
      b.cost = per_type(p, "cost", k);
      b.coupling = per_type(p, "coupling", k);
      b.vol = per_type(p, "vol", k);
      b.init_mean = per_type(p, "init_mean", k);
      b.init_std = per_type(p, "init_std", k);
      b.horizon = number(p, "horizon");
      b.action_bound = number(p, "action_bound");
      b.lipschitz = number(p, "lipschitz");
      b.name = name;
      out.problem = make_problem(b);
      out.init_mean = b.init_mean;
      out.init_std = b.init_std;
      out.lq = b;
    } else if (family == "congestion") {
      CongestionModel m;
      m.vol = per_type(p, "vol", k);
      m.strength = per_type(p, "strength", k);
      m.cost = per_type(p, "cost", k);
      m.target = per_type(p, "target", k);
      m.init_mean = per_type(p, "init_mean", k);
      m.init_std = per_type(p, "init_std", k);
      m.bandwidth = number(p, "bandwidth");
      m.horizon = number(p, "horizon");
      m.action_bound = number(p, "action_bound");
      m.lipschitz = number(p, "lipschitz");
      m.name = name;
      out.problem = make_problem(m);
      out.init_mean = m.init_mean;
      out.init_std = m.init_std;
    } else {
      field_error("problem.family", "unknown family '" + family + "'");
    }
  } catch (const ValidationError& e) {
    throw ConfigError(std::string("problem: ") + e.what());
  }
  return out;
}

SolverGrids make_grids(const RunConfig& config, const BuiltProblem& problem) {
  double lo = 0.0;
  double hi = 0.0;
  if (config.grid.x_min) {
    lo = *config.grid.x_min;
    hi = *config.grid.x_max;
  } else {
    // Initial supports widened by six standard deviations and a margin of two, rounded outward.
    lo = std::floor((problem.init_mean - 6.0 * problem.init_std).minCoeff() - 2.0);
    hi = std::ceil((problem.init_mean + 6.0 * problem.init_std).maxCoeff() + 2.0);
  }
  return {StateGrid(lo, hi, config.grid.n_x), TimeGrid(0.0, problem.problem.horizon, config.grid.n_t)};
}

std::uint64_t derive_seed(std::uint64_t seed, std::string_view purpose, std::uint64_t index) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const char ch : purpose) {
    h ^= static_cast<unsigned char>(ch);
    h *= 0x100000001b3ULL;
  }
  return splitmix64(splitmix64(seed ^ h) + index);
}

}  // namespace hmfg
