// Apache License, Version 2.0, refer to LICENSE.txt

#pragma once

#include <Eigen/Dense>
#include <optional>
#include <vector>

#include "thdp/analysis.hpp"
#include "thdp/posterior.hpp"
#include "thdp/random.hpp"
#include "thdp/trajectory.hpp"

namespace thdp {

using Point2 = Eigen::Vector2d;
using Mat3 = Eigen::Matrix3d;
using Vec3 = Eigen::Vector3d;

struct Gmm2 {
  std::vector<double> weights;
  std::vector<Point2> means;
  std::vector<Eigen::Matrix2d> covariances;
  double bic = 0.0;

  std::size_t size() const { return weights.size(); }
  double log_density(const Point2& x) const;
  Point2 sample(Rng& rng) const;
};

struct GmmOptions {
  int max_components = 5;
  int max_iters = 300;
  double tolerance = 1e-9;
  double variance_floor = 1e-6;
  // components may not shrink below this share of the overall per-axis variance
  double relative_floor = 0.01;
};

/// EM for each K up to max_components, smallest BIC wins. Needs >= 2 points.
Gmm2 fit_endpoint_gmm(const std::vector<Point2>& pts, const GmmOptions& opts = {});
/// Single component at `p` with floored covariance; used for one-point flows.
Gmm2 point_gmm(const Point2& p, double variance_floor = 1e-6);

inline constexpr double kObservationNoise = 0.001;

/// Homogeneous linear dynamics over [x, y, 1]; A is the identity and Omega
/// is diagonal kObservationNoise.
struct FlowDynamics {
  Mat3 B = Mat3::Identity();
  Mat3 Lambda = Mat3::Identity();
  bool operator==(const FlowDynamics&) const = default;
};

/// Per-trajectory expectations from the smoother, sums over t = 2..T.
struct LdsStats {
  Mat3 Ptt = Mat3::Zero();     // sum E[s_t s_t']
  Mat3 Ptt1 = Mat3::Zero();    // sum E[s_t s_{t-1}']
  Mat3 Pt1t1 = Mat3::Zero();   // sum E[s_{t-1} s_{t-1}']
  std::size_t transitions = 0;
};

struct SmoothResult {
  std::vector<Vec3> means;  // E[s_t], t = 1..T
  LdsStats stats;
  double log_likelihood = 0.0;
  double tau_score = 0.0;  // (1/T) sum_t p(x_t | E[s_t])
};

/// Kalman filter from the clamped first point, observing the rest with
/// noise Omega, then RTS smoothing.
SmoothResult smooth_trajectory(const FlowDynamics& dyn, const std::vector<Point2>& xs);

struct MStepResult {
  FlowDynamics dynamics;
  bool regularized = false;  // denominator needed a ridge
};

MStepResult m_step_update(const std::vector<LdsStats>& stats, const std::vector<double>& tau);

struct LdsConfig {
  int max_iters = 200;
  double tolerance = 1e-6;  // relative log-likelihood change
  bool likelihood_tau = true;  // false weights every trajectory equally
};

struct LdsFit {
  FlowDynamics dynamics;
  std::vector<double> log_likelihood;  // after each E-step
  int iterations = 0;
  bool converged = false;
  bool regularized = false;
};

/// Trajectories must share a frame interval; those with fewer than 3
/// points are skipped.
LdsFit fit_flow_dynamics(const std::vector<std::vector<Point2>>& trajs, const LdsConfig& cfg = {});

/// Forward prediction from s1, backward sampling given sT. First and last
/// points equal s1 and sT.
std::vector<Point2> sample_guided_trajectory(const FlowDynamics& dyn, const Point2& s1, const Point2& sT,
                                             std::size_t T, Rng& rng);

/// Linear interpolation onto a fixed frame interval starting at the first timestamp.
std::vector<Point2> resample_path(const Trajectory& t, double frame_interval);
double median_frame_interval(const std::vector<Trajectory>& trajs);

struct ScenarioFlow {
  std::size_t posterior_flow = 0;
  double weight = 0.0;
  Gmm2 start;
  Gmm2 destination;
  std::vector<double> time_weights;
  std::vector<double> speed_weights;
  std::optional<FlowDynamics> dynamics;
  bool straight_line_fallback = false;
  std::size_t trajectories = 0;
};

struct GuidanceScenario {
  std::vector<ScenarioFlow> flows;
  std::vector<GaussianMode> time_modes;
  std::vector<GaussianMode> speed_modes;
  double horizon = 0.0;
  double frame_interval = 1.0;
};

struct GuidanceConfig {
  GmmOptions gmm;
  LdsConfig lds;
  std::size_t min_trajectories = 3;
  std::optional<double> frame_interval;  // dataset median when absent
};

/// Flows with no assigned trajectory are dropped and the weights renormalised.
GuidanceScenario build_scenario(const ThdpPosterior& p, const std::vector<Trajectory>& trajs,
                                const std::vector<FlowAssignment>& assignments, const GuidanceConfig& cfg = {});

struct AgentSpec {
  std::size_t flow = 0;  // index into GuidanceScenario::flows
  Point2 start;
  Point2 destination;
  double entry_time = 0.0;
  double desired_speed = 0.0;
  std::vector<Point2> path;
};

std::vector<AgentSpec> sample_agents(const GuidanceScenario& sc, std::size_t n, Rng& rng, bool with_paths = true);

}  // namespace thdp
