// Apache License, Version 2.0, refer to LICENSE.txt

#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "thdp/analysis.hpp"
#include "thdp/concentration.hpp"
#include "thdp/crfl.hpp"
#include "thdp/dataset.hpp"
#include "thdp/guidance.hpp"
#include "thdp/posterior.hpp"

namespace thdp {

inline constexpr int kModelFormatVersion = 1;

/// Everything that shaped a fit; echoed into the model file.
struct RunConfig {
  std::uint32_t grid_rows = 40;
  std::uint32_t grid_cols = 40;
  int segments = 1;
  int burn_in = 5000;
  int max_iters = 2000;
  std::uint64_t seed = 0;
  int customer_selection = 1000;
  GammaPrior hyper_prior;
  double initial_concentration = 0.1;
  double prune = 0.01;
  std::size_t quadrature = 2048;
  double eta = 0.5;
  double static_threshold = 0.1;
  std::size_t max_trajectories = 0;
  bool early_stop = false;

  bool operator==(const RunConfig&) const = default;
};

/// Throws InvalidInput naming the first bad field.
void validate_run_config(const RunConfig& c);

struct ModelFile {
  ThdpPosterior posterior;
  std::optional<RunConfig> config;
  std::string source;
  double time_origin = 0.0;
  std::size_t observations = 0;
  std::size_t trajectories = 0;
  int sweeps = 0;

  bool operator==(const ModelFile&) const = default;
};

DatasetOptions dataset_options(const RunConfig& c);
FitConfig fit_config(const RunConfig& c);
/// Fits, prunes at c.prune and packages the result with the config echo.
ModelFile fit_model(const Dataset& d, const RunConfig& c);
/// Loader options that reproduce the model's codebook and time origin.
DatasetOptions dataset_options_for(const ModelFile& m);

std::string serialize_model(const ModelFile& m);
ModelFile parse_model(const std::string& text);
void save_model(const ModelFile& m, const std::string& path);
ModelFile load_model(const std::string& path);

std::string serialize_scenario(const GuidanceScenario& s);
GuidanceScenario parse_scenario(const std::string& text);
void save_scenario(const GuidanceScenario& s, const std::string& path);
GuidanceScenario load_scenario(const std::string& path);

/// {"flows": [{"path": [[x, y], ...], "time_mean", "time_sd", "speed_mean",
/// "speed_sd", "trajectories"}], "position_noise", "frame_interval"}
SyntheticSpec parse_synthetic_spec(const std::string& text);

std::string serialize_agents(const std::vector<AgentSpec>& agents);

struct ExportOptions {
  std::size_t grid_points = 512;
  std::size_t windows = 10;  // prominence time windows
  std::size_t surface_points = 64;
  const std::vector<AnomalyReport>* anomalies = nullptr;
};

inline constexpr const char* kExportKinds[] = {"flow_weights",   "time_profiles",   "speed_profiles",
                                               "prominence",     "time_speed_grid", "anomaly_table"};

/// Writes a CSV series with a header row. Profiles are scaled by the flow weight.
void export_plot_series(const ThdpPosterior& p, const std::string& kind, std::ostream& out,
                        const ExportOptions& opts = {});

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& text);

}  // namespace thdp
