// Apache License, Version 2.0, refer to LICENSE.txt

#include "thdp/trajectory.hpp"

#include <algorithm>
#include <cmath>

#include "thdp/error.hpp"

namespace thdp {

Trajectory estimate_velocities(const RawTrajectory& raw, std::size_t window) {
  const std::size_t n = raw.points.size();
  if (n < 2)
    throw InvalidInput("trajectory '" + raw.id + "' has " + std::to_string(n) +
                       " point(s); velocity estimation needs at least 2");
  if (window == 0) window = 1;
  Trajectory out;
  out.id = raw.id;
  out.observations.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t lo = i >= window ? i - window : 0;
    const std::size_t hi = std::min(n - 1, i + window);
    const RawPoint& a = raw.points[lo];
    const RawPoint& b = raw.points[hi];
    const double dt = b.t - a.t;
    if (!(dt > 0.0)) throw InvalidInput("trajectory '" + raw.id + "' has non-increasing timestamps");
    Observation& o = out.observations[i];
    o.time = raw.points[i].t;
    o.x = raw.points[i].x;
    o.y = raw.points[i].y;
    o.vx = (b.x - a.x) / dt;
    o.vy = (b.y - a.y) / dt;
    o.speed = std::hypot(o.vx, o.vy);
  }
  return out;
}

std::size_t tokenize_trajectory(Trajectory& traj, const Codebook& cb, OutOfBounds policy) {
  std::size_t clamped = 0;
  for (Observation& o : traj.observations) {
    const TokenizeResult r = tokenize(o.x, o.y, o.vx, o.vy, cb, policy);
    o.cell = r.cell;
    clamped += r.clamped ? 1 : 0;
  }
  return clamped;
}

std::size_t observation_count(const std::vector<Trajectory>& trajs) {
  std::size_t n = 0;
  for (const auto& t : trajs) n += t.observations.size();
  return n;
}

}  // namespace thdp
