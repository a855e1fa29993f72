// Apache License, Version 2.0, refer to LICENSE.txt

#pragma once

#include <array>
#include <string>
#include <vector>

#include "thdp/posterior.hpp"
#include "thdp/trajectory.hpp"

namespace thdp {

/// Per-flow log-likelihood pieces of one trajectory. total includes log beta.
struct FlowLogLikelihoods {
  std::vector<double> total;
  std::vector<double> space;
  std::vector<double> time;
  std::vector<double> speed;
  std::size_t observations = 0;
};

struct FlowAssignment {
  std::string traj_id;
  std::vector<double> probabilities;
  std::size_t flow = 0;  // argmax
  // pieces for the argmax flow
  double space_log_likelihood = 0.0;
  double time_log_likelihood = 0.0;
  double speed_log_likelihood = 0.0;
};

struct AnomalyReport {
  std::string traj_id;
  double score = 0.0;  // length-normalised log-likelihood
  double b_space = 0.0;
  double b_time = 0.0;
  double b_speed = 0.0;
  bool flagged = false;
};

/// `cb` is the codebook the trajectory was tokenised with; it must match.
FlowLogLikelihoods trajectory_log_likelihood(const ThdpPosterior& p, const Trajectory& traj,
                                             const Codebook& cb);

std::vector<double> softmax(const std::vector<double>& logw);

FlowAssignment classify(const ThdpPosterior& p, const Trajectory& traj, const Codebook& cb);
std::vector<FlowAssignment> classify_all(const ThdpPosterior& p, const std::vector<Trajectory>& trajs,
                                         const Codebook& cb);

/// Flow posterior for a single observation; space-only posteriors ignore time and speed.
std::vector<double> classify_observation(const ThdpPosterior& p, const Observation& o);

enum class ProfileDimension { Time, Speed };

/// beta_k times the flow's mass inside [lo, hi], renormalised. Infinite bounds allowed.
std::vector<double> flow_prominence(const ThdpPosterior& p, ProfileDimension dim, double lo, double hi);

/// Row i, column j holds p(t_i | k) p(v_j | k).
std::vector<std::vector<double>> time_speed_profile(const ThdpPosterior& p, std::size_t k,
                                                    const std::vector<double>& times,
                                                    const std::vector<double>& speeds);

/// One report per trajectory in input order; those strictly below the
/// q-quantile of the normalised score are flagged.
std::vector<AnomalyReport> anomaly_scores(const ThdpPosterior& p, const std::vector<Trajectory>& trajs,
                                          const Codebook& cb, double q);

/// Turns per-dimension log relative probabilities into simplex coordinates.
std::array<double, 3> barycentric_from_log(const std::array<double, 3>& log_rel);

}  // namespace thdp
