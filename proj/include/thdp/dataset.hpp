// Apache License, Version 2.0, refer to LICENSE.txt

#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "thdp/codebook.hpp"
#include "thdp/trajectory.hpp"

namespace thdp {

struct DatasetOptions {
  std::uint32_t rows = 40;
  std::uint32_t cols = 40;
  std::optional<Rect> bounds;  // taken from the data when absent
  double static_threshold = 0.1;
  std::size_t velocity_window = 1;
  int segments = 1;
  OutOfBounds out_of_bounds = OutOfBounds::Clamp;
  std::size_t max_trajectories = 0;  // 0 keeps all
  std::uint64_t sample_seed = 0;
  std::optional<double> time_origin;  // earliest timestamp when absent
};

struct DatasetManifest {
  std::string source;
  Codebook codebook;
  int segments = 1;
  std::size_t observations = 0;
  std::size_t trajectories = 0;
  double time_span = 0.0;
  double time_origin = 0.0;  // subtracted from every input timestamp
  std::size_t rejected_rows = 0;
  std::vector<std::string> rejections;
  std::size_t clamped = 0;
};

struct Dataset {
  std::vector<Trajectory> trajectories;
  DatasetManifest manifest;
};

struct RawRead {
  std::vector<RawTrajectory> trajectories;  // sorted by id
  std::size_t rows = 0;
  std::size_t rejected_rows = 0;
  std::vector<std::string> rejections;  // "line N: reason"
};

/// CSV with header traj_id,t,x,y. Malformed rows and rows whose timestamp
/// does not increase within their trajectory are rejected with a reason.
RawRead read_trajectory_csv(std::istream& in);

/// Velocities, bounds, tokens, time origin and segments. Trajectories with a
/// single point are rejected and counted.
Dataset prepare_dataset(RawRead raw, const DatasetOptions& opts, const std::string& source = "");

/// Pre-tokenised JSON lines: {"traj_id", "t", "cell", "speed"} and optional
/// "x", "y". Needs explicit bounds for the codebook.
Dataset read_tokenized_jsonl(std::istream& in, const DatasetOptions& opts,
                             const std::string& source = "");

/// Dispatches on the extension (.csv or .jsonl). Throws InvalidInput when the
/// file is missing or yields no trajectories.
Dataset load_trajectories(const std::string& path, const DatasetOptions& opts);

/// Equal-width time segments; returns the span. Every observation gets the
/// index of its interval.
double segment_into_groups(std::vector<Trajectory>& trajs, int segments);

struct SyntheticFlow {
  std::vector<std::array<double, 2>> path;  // polyline waypoints
  double time_mean = 0.0;
  double time_sd = 1.0;
  double speed_mean = 1.0;
  double speed_sd = 0.1;
  int trajectories = 10;
};

struct SyntheticSpec {
  std::vector<SyntheticFlow> flows;
  double position_noise = 0.0;
  double frame_interval = 1.0;
  double min_speed = 0.05;
  std::uint64_t seed = 0;
};

struct SyntheticData {
  std::vector<RawTrajectory> trajectories;
  std::vector<int> labels;  // flow index per trajectory
};

/// Walks each flow's polyline at a sampled speed from a sampled entry time.
/// Trajectories are emitted flow by flow with ids "f<flow>_<n>".
SyntheticData generate_synthetic(const SyntheticSpec& spec);

/// Writes traj_id,t,x,y rows.
void write_trajectory_csv(std::ostream& out, const std::vector<RawTrajectory>& trajs);

}  // namespace thdp
