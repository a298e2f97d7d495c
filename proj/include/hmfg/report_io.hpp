#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

#include "hmfg/mfcalculus.hpp"
#include "hmfg/nplayer.hpp"

namespace hmfg {

/// Shortest text with 17 significant digits.
std::string format_double(double v);

/// theta,x,density
void write_ensemble_csv(const std::filesystem::path& path, const MeasureEnsemble& mu);
/// t,theta,x,density
void write_flow_csv(const std::filesystem::path& path, const EnsembleFlow& flow);
/// theta,t,x,u,p
void write_values_csv(const std::filesystem::path& path, const std::vector<ValueField>& values);
/// N,K,n_min,stat,ci_low,ci_high
void write_ladder_csv(const std::filesystem::path& path, const std::vector<ChaosReport>& ladder);
/// replication,t,player,cluster,x
void write_paths_csv(const std::filesystem::path& path, const std::vector<PathBundle>& bundles);

/// Reads a flow written by write_flow_csv; the rows must match the grids and type points exactly.
EnsembleFlow read_flow_csv(const std::filesystem::path& path, const SolverGrids& grids,
                           const std::vector<double>& type_points);
std::vector<ValueField> read_values_csv(const std::filesystem::path& path, const SolverGrids& grids,
                                        const std::vector<double>& type_points);

void write_json(const std::filesystem::path& path, const nlohmann::json& j);

nlohmann::json to_json(const TruncationGuard& g);
/// Excludes wall time, which belongs in the run manifest.
nlohmann::json to_json(const SolveReport& r);
nlohmann::json to_json(const ChaosReport& r);
nlohmann::json to_json(const ExploitabilityReport& r);
nlohmann::json to_json(const FlowDerivativeReport& r);
nlohmann::json to_json(const ItoSummary& s);
nlohmann::json to_json(const DecouplingReport& r);
nlohmann::json to_json(const MasterResidualReport& r);
nlohmann::json to_json(const ValidationReport& r);
nlohmann::json grid_json(const SolverGrids& grids);

}  // namespace hmfg
