#include "hmfg/report_io.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "hmfg/errors.hpp"

namespace hmfg {

using nlohmann::json;

std::string format_double(double v) {
  char buf[32];
  const int n = std::snprintf(buf, sizeof buf, "%.17g", v);
  return std::string(buf, static_cast<std::size_t>(n));
}

namespace {

std::ofstream open_out(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  return out;
}

class CsvReader {
 public:
  CsvReader(const std::filesystem::path& path, const std::string& header) : path_(path), in_(path, std::ios::binary) {
    if (!in_) throw ValidationError("missing file '" + path.string() + "'");
    std::string line;
    std::getline(in_, line);
    if (line != header) throw ValidationError(path.string() + ": expected header '" + header + "'");
  }

  bool next(std::vector<double>& fields) {
    std::string line;
    if (!std::getline(in_, line)) return false;
    ++line_no_;
    fields.clear();
    const char* p = line.data();
    const char* end = p + line.size();
    while (p <= end) {
      const char* comma = std::find(p, end, ',');
      double v = 0.0;
      const auto [ptr, ec] = std::from_chars(p, comma, v);
      if (ec != std::errc() || ptr != comma) fail("malformed number");
      fields.push_back(v);
      p = comma + 1;
    }
    return true;
  }

  [[noreturn]] void fail(const std::string& what) const {
    throw ValidationError(path_.string() + ":" + std::to_string(line_no_ + 1) + ": " + what);
  }

 private:
  std::filesystem::path path_;
  std::ifstream in_;
  std::size_t line_no_ = 0;
};

bool same(double a, double b) { return std::abs(a - b) <= 1e-12 * std::max(1.0, std::abs(b)); }

}  // namespace

void write_ensemble_csv(const std::filesystem::path& path, const MeasureEnsemble& mu) {
  auto out = open_out(path);
  out << "theta,x,density\n";
  for (Index l = 0; l < mu.n_types(); ++l) {
    const GridMeasure& g = mu.grid_measure(l);
    const std::string th = format_double(mu.type_point(l));
    for (Index i = 0; i < g.grid().size(); ++i) {
      out << th << ',' << format_double(g.grid().node(i)) << ',' << format_double(g.density()[i]) << '\n';
    }
  }
}

void write_flow_csv(const std::filesystem::path& path, const EnsembleFlow& flow) {
  auto out = open_out(path);
  out << "t,theta,x,density\n";
  const StateGrid& grid = flow.grid();
  std::vector<std::string> xs;
  for (Index i = 0; i < grid.size(); ++i) xs.push_back(format_double(grid.node(i)));
  for (Index n = 0; n < flow.n_times(); ++n) {
    const std::string t = format_double(flow.time(n));
    for (Index l = 0; l < flow.n_types(); ++l) {
      const std::string th = format_double(flow.type_points()[static_cast<std::size_t>(l)]);
      const Vector& d = flow.density(n, l);
      for (Index i = 0; i < grid.size(); ++i) {
        out << t << ',' << th << ',' << xs[static_cast<std::size_t>(i)] << ',' << format_double(d[i]) << '\n';
      }
    }
  }
}

void write_values_csv(const std::filesystem::path& path, const std::vector<ValueField>& values) {
  auto out = open_out(path);
  out << "theta,t,x,u,p\n";
  for (const auto& v : values) {
    const std::string th = format_double(v.theta);
    for (Index n = 0; n < v.n_times(); ++n) {
      const std::string t = format_double(v.times[static_cast<std::size_t>(n)]);
      for (Index i = 0; i < v.grid.size(); ++i) {
        out << th << ',' << t << ',' << format_double(v.grid.node(i)) << ',' << format_double(v.u(n, i)) << ','
            << format_double(v.p(n, i)) << '\n';
      }
    }
  }
}

void write_ladder_csv(const std::filesystem::path& path, const std::vector<ChaosReport>& ladder) {
  auto out = open_out(path);
  out << "N,K,n_min,stat,ci_low,ci_high\n";
  for (const auto& r : ladder) {
    out << r.n_players << ',' << r.n_types << ',' << r.n_min << ',' << format_double(r.statistic) << ','
        << format_double(r.statistic - r.ci_half_width) << ',' << format_double(r.statistic + r.ci_half_width) << '\n';
  }
}

void write_paths_csv(const std::filesystem::path& path, const std::vector<PathBundle>& bundles) {
  auto out = open_out(path);
  out << "replication,t,player,cluster,x\n";
  for (const auto& b : bundles) {
    for (Index n = 0; n < b.states.rows(); ++n) {
      const std::string t = format_double(b.times[static_cast<std::size_t>(n)]);
      for (Index i = 0; i < b.states.cols(); ++i) {
        out << b.replication << ',' << t << ',' << i << ',' << b.labels[static_cast<std::size_t>(i)] << ','
            << format_double(b.states(n, i)) << '\n';
      }
    }
  }
}

EnsembleFlow read_flow_csv(const std::filesystem::path& path, const SolverGrids& grids,
                           const std::vector<double>& type_points) {
  CsvReader in(path, "t,theta,x,density");
  const Index nt = grids.time.size();
  const Index nx = grids.space.size();
  const auto k = static_cast<Index>(type_points.size());
  std::vector<RowMatrix> dens(static_cast<std::size_t>(k), RowMatrix(nt, nx));
  std::vector<double> f;
  Index row = 0;
  while (in.next(f)) {
    if (f.size() != 4) in.fail("expected 4 fields");
    const Index n = row / (k * nx);
    const Index l = (row / nx) % k;
    const Index i = row % nx;
    if (n >= nt) in.fail("more rows than the grids allow");
    if (!same(f[0], grids.time.time(n)) || !same(f[1], type_points[static_cast<std::size_t>(l)]) ||
        !same(f[2], grids.space.node(i))) {
      in.fail("row does not match the configured grids");
    }
    dens[static_cast<std::size_t>(l)](n, i) = f[3];
    ++row;
  }
  if (row != nt * k * nx) throw ValidationError(path.string() + ": expected " + std::to_string(nt * k * nx) + " rows");
  std::vector<MeasureEnsemble> snaps;
  for (Index n = 0; n < nt; ++n) {
    std::vector<Measure> ms;
    for (Index l = 0; l < k; ++l) {
      ms.emplace_back(GridMeasure(grids.space, dens[static_cast<std::size_t>(l)].row(n).transpose(),
                                  path.filename().string() + " type " + std::to_string(l) + " at node " +
                                      std::to_string(n)));
    }
    snaps.emplace_back(std::move(ms), type_points);
  }
  return EnsembleFlow(grids.time.times(), std::move(snaps));
}

std::vector<ValueField> read_values_csv(const std::filesystem::path& path, const SolverGrids& grids,
                                        const std::vector<double>& type_points) {
  CsvReader in(path, "theta,t,x,u,p");
  const Index nt = grids.time.size();
  const Index nx = grids.space.size();
  const auto k = static_cast<Index>(type_points.size());
  std::vector<ValueField> out;
  for (Index l = 0; l < k; ++l) {
    out.push_back({type_points[static_cast<std::size_t>(l)], grids.space, grids.time.times(), RowMatrix(nt, nx),
                   RowMatrix(nt, nx)});
  }
  std::vector<double> f;
  Index row = 0;
  while (in.next(f)) {
    if (f.size() != 5) in.fail("expected 5 fields");
    const Index l = row / (nt * nx);
    const Index n = (row / nx) % nt;
    const Index i = row % nx;
    if (l >= k) in.fail("more rows than the grids allow");
    if (!same(f[0], type_points[static_cast<std::size_t>(l)]) || !same(f[1], grids.time.time(n)) ||
        !same(f[2], grids.space.node(i))) {
      in.fail("row does not match the configured grids");
    }
    out[static_cast<std::size_t>(l)].u(n, i) = f[3];
    out[static_cast<std::size_t>(l)].p(n, i) = f[4];
    ++row;
  }
  if (row != nt * k * nx) throw ValidationError(path.string() + ": expected " + std::to_string(nt * k * nx) + " rows");
  return out;
}

void write_json(const std::filesystem::path& path, const json& j) {
  auto out = open_out(path);
  out << j.dump(2) << '\n';
}

json to_json(const TruncationGuard& g) {
  return {{"bound", g.bound}, {"max_observed", g.max_observed}, {"violated", g.violated},
          {"location", {{"theta", g.theta}, {"t", g.t}, {"x", g.x}}}};
}

json to_json(const SolveReport& r) {
  return {{"converged", r.converged},
          {"iterations", r.iterations},
          {"residuals", r.residuals},
          {"contraction_ratios", r.contraction_ratios},
          {"certificate", r.certificate},
          {"guard", to_json(r.guard)},
          {"edge_mass", r.edge_mass},
          {"max_renormalization", r.max_renormalization},
          {"feedback_lipschitz", r.feedback_lipschitz},
          {"windows", r.windows}};
}

json to_json(const ChaosReport& r) {
  return {{"N", r.n_players},
          {"K", r.n_types},
          {"n_min", r.n_min},
          {"sup_t_E_d1_sq", r.statistic},
          {"ci_half_width", r.ci_half_width},
          {"argmax_time", r.argmax_time},
          {"times", r.times},
          {"mean_d1_sq", r.mean_d1_sq},
          {"bound_terms",
           {{"rho_K_proxy", r.rho_k_proxy},
            {"delta_w1_sq", r.delta_w1_sq},
            {"delta_moment_q4", r.delta_moment},
            {"cluster_term", r.cluster_term}}},
          {"replications", r.replications},
          {"seed", r.seed}};
}

json to_json(const ExploitabilityReport& r) {
  return {{"eps_hat", r.eps_hat},
          {"J_eq", r.j_eq},
          {"J_dev", r.j_dev},
          {"gain_mean", r.gain_mean},
          {"gain_ci_half_width", r.gain_ci_half_width},
          {"J_mean_field", r.j_mean_field},
          {"player", r.player},
          {"replications", r.replications}};
}

json to_json(const FlowDerivativeReport& r) {
  return {{"lhs", r.lhs},           {"rhs", r.rhs},     {"abs_err", r.abs_err},     {"rel_err", r.rel_err},
          {"particles", r.particles}, {"dt", r.dt},     {"seed", r.seed},           {"elln_mean", r.elln_mean},
          {"elln_se", r.elln_se}};
}

json to_json(const ItoSummary& s) {
  json runs = json::array();
  for (const auto& r : s.runs) runs.push_back(to_json(r));
  json j = {{"name", s.name},
            {"lhs_mean", s.lhs_mean},
            {"rhs_mean", s.rhs_mean},
            {"diff", s.diff},
            {"combined_se", s.combined_se},
            {"tolerance", "3 combined standard errors"},
            {"status", s.inconclusive ? "inconclusive" : (s.passed ? "passed" : "failed")},
            {"runs", runs}};
  if (s.has_exact) j["exact"] = s.exact;
  return j;
}

json to_json(const DecouplingReport& r) {
  json per_type = json::array();
  for (Index l = 0; l < r.drift_by_checkpoint.rows(); ++l) {
    std::vector<double> row(r.drift_by_checkpoint.cols());
    for (Index c = 0; c < r.drift_by_checkpoint.cols(); ++c) row[static_cast<std::size_t>(c)] = r.drift_by_checkpoint(l, c);
    per_type.push_back(row);
  }
  return {{"dt", r.dt},
          {"paths", r.paths},
          {"seed", r.seed},
          {"drift_residual", r.drift_residual},
          {"martingale_residual", r.martingale_residual},
          {"terminal_error", r.terminal_error},
          {"checkpoint_times", r.checkpoint_times},
          {"drift_by_checkpoint", per_type}};
}

json to_json(const MasterResidualReport& r) {
  return {{"max_analytic", r.max_analytic},
          {"max_fd", r.max_fd},
          {"max_route_gap", r.max_route_gap},
          {"samples", r.samples}};
}

json to_json(const ValidationReport& r) {
  json ratios = json::array();
  for (const auto& q : r.ratios) {
    ratios.push_back({{"coefficient", q.coefficient},
                      {"ratio", q.ratio},
                      {"unbounded", q.unbounded},
                      {"location", {{"theta", q.theta}, {"t", q.t}, {"x1", q.x1}, {"x2", q.x2}}}});
  }
  return {{"passed", r.passed},
          {"ratios", ratios},
          {"min_vol_times_L", r.min_vol_times_l},
          {"envelope_error", r.envelope_error},
          {"sup_gap", r.sup_gap},
          {"argmax_gap", r.argmax_gap},
          {"failures", r.failures}};
}

json grid_json(const SolverGrids& grids) {
  return {{"x_min", grids.space.x_min()}, {"x_max", grids.space.x_max()}, {"n_x", grids.space.size()},
          {"dx", grids.space.dx()},       {"t0", grids.time.t0()},        {"T", grids.time.t_end()},
          {"n_t", grids.time.size()},     {"dt", grids.time.dt()}};
}

}  // namespace hmfg
