// Apache License, Version 2.0, refer to LICENSE.txt

#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "thdp/codebook.hpp"

namespace thdp {

struct RawPoint {
  double t = 0.0;
  double x = 0.0;
  double y = 0.0;
};

struct RawTrajectory {
  std::string id;
  std::vector<RawPoint> points;
};

/// One person in one frame: a space token, a timestamp and a speed.
struct Observation {
  int group = 0;
  Cell cell = 0;
  double time = 0.0;   // seconds from dataset start
  double speed = 0.0;  // scene units per second
  double x = 0.0;
  double y = 0.0;
  double vx = 0.0;
  double vy = 0.0;
};

struct Trajectory {
  std::string id;
  std::vector<Observation> observations;
};

/// Central differences over `window` frames, one-sided at the ends.
/// Throws InvalidInput for fewer than two points.
Trajectory estimate_velocities(const RawTrajectory& raw, std::size_t window = 1);

/// Fills in every observation's cell. Returns the number of clamped positions.
std::size_t tokenize_trajectory(Trajectory& traj, const Codebook& cb,
                                OutOfBounds policy = OutOfBounds::Clamp);

std::size_t observation_count(const std::vector<Trajectory>& trajs);

}  // namespace thdp
