// Apache License, Version 2.0, refer to LICENSE.txt

#include "thdp/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "thdp/error.hpp"
#include "thdp/random.hpp"

namespace thdp {

namespace {

void require_codebook(const ThdpPosterior& p, const Codebook& cb) {
  if (!(p.codebook == cb)) throw InvalidInput("trajectory codebook does not match the posterior");
}

double log_weight(const ThdpPosterior& p, std::size_t k) {
  const double w = p.flows[k].weight;
  return w > 0.0 ? std::log(w) : -std::numeric_limits<double>::infinity();
}

double quantile(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, v.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  if (frac == 0.0) return v[lo];
  return v[lo] + frac * (v[hi] - v[lo]);
}

}  // namespace

FlowLogLikelihoods trajectory_log_likelihood(const ThdpPosterior& p, const Trajectory& traj,
                                             const Codebook& cb) {
  require_codebook(p, cb);
  if (traj.observations.empty()) throw InvalidInput("empty trajectory " + traj.id);
  if (p.flows.empty()) throw InvalidInput("posterior has no flows");
  const std::size_t K = p.flow_count();
  FlowLogLikelihoods out;
  out.observations = traj.observations.size();
  out.space.assign(K, 0.0);
  out.time.assign(K, 0.0);
  out.speed.assign(K, 0.0);
  out.total.assign(K, 0.0);
  for (std::size_t k = 0; k < K; ++k) {
    for (const Observation& o : traj.observations) {
      out.space[k] += flow_space_log_prob(p, k, o.cell);
      if (p.has_time()) out.time[k] += flow_time_log_density(p, k, o.time);
      if (p.has_speed()) out.speed[k] += flow_speed_log_density(p, k, o.speed);
    }
    out.total[k] = log_weight(p, k) + out.space[k] + out.time[k] + out.speed[k];
  }
  return out;
}

std::vector<double> softmax(const std::vector<double>& logw) { return normalize_log_weights(logw); }

FlowAssignment classify(const ThdpPosterior& p, const Trajectory& traj, const Codebook& cb) {
  const FlowLogLikelihoods ll = trajectory_log_likelihood(p, traj, cb);
  FlowAssignment a;
  a.traj_id = traj.id;
  a.probabilities = softmax(ll.total);
  a.flow = static_cast<std::size_t>(std::max_element(ll.total.begin(), ll.total.end()) - ll.total.begin());
  a.space_log_likelihood = ll.space[a.flow];
  a.time_log_likelihood = ll.time[a.flow];
  a.speed_log_likelihood = ll.speed[a.flow];
  return a;
}

std::vector<FlowAssignment> classify_all(const ThdpPosterior& p, const std::vector<Trajectory>& trajs,
                                         const Codebook& cb) {
  std::vector<FlowAssignment> out;
  out.reserve(trajs.size());
  for (const auto& t : trajs) out.push_back(classify(p, t, cb));
  return out;
}

std::vector<double> classify_observation(const ThdpPosterior& p, const Observation& o) {
  std::vector<double> lw(p.flow_count());
  for (std::size_t k = 0; k < lw.size(); ++k) {
    lw[k] = log_weight(p, k) + flow_space_log_prob(p, k, o.cell);
    if (p.has_time()) lw[k] += flow_time_log_density(p, k, o.time);
    if (p.has_speed()) lw[k] += flow_speed_log_density(p, k, o.speed);
  }
  return softmax(lw);
}

std::vector<double> flow_prominence(const ThdpPosterior& p, ProfileDimension dim, double lo, double hi) {
  if (!(lo < hi)) throw InvalidInput("prominence interval is empty");
  const bool time = dim == ProfileDimension::Time;
  if (time ? !p.has_time() : !p.has_speed()) throw InvalidInput("posterior has no profile for that dimension");
  std::vector<double> w(p.flow_count());
  if (std::isinf(lo) && lo < 0 && std::isinf(hi) && hi > 0) {
    for (std::size_t k = 0; k < w.size(); ++k) w[k] = p.flows[k].weight;
    return w;
  }
  double total = 0.0;
  for (std::size_t k = 0; k < w.size(); ++k) {
    const Flow& f = p.flows[k];
    w[k] = f.weight * (time ? mixture_mass(f.time_weights, p.time_modes, lo, hi)
                            : mixture_mass(f.speed_weights, p.speed_modes, lo, hi));
    total += w[k];
  }
  if (!(total > 0.0)) throw InvalidInput("no flow has mass inside the interval");
  for (double& x : w) x /= total;
  return w;
}

std::vector<std::vector<double>> time_speed_profile(const ThdpPosterior& p, std::size_t k,
                                                    const std::vector<double>& times,
                                                    const std::vector<double>& speeds) {
  if (k >= p.flow_count()) throw InvalidInput("flow index out of range");
  if (times.empty() || speeds.empty()) throw InvalidInput("empty profile grid");
  if (!p.has_time() || !p.has_speed()) throw InvalidInput("posterior lacks time or speed profiles");
  std::vector<double> pv(speeds.size());
  for (std::size_t j = 0; j < speeds.size(); ++j) pv[j] = std::exp(flow_speed_log_density(p, k, speeds[j]));
  std::vector<std::vector<double>> m(times.size(), std::vector<double>(speeds.size()));
  for (std::size_t i = 0; i < times.size(); ++i) {
    const double pt = std::exp(flow_time_log_density(p, k, times[i]));
    for (std::size_t j = 0; j < speeds.size(); ++j) m[i][j] = pt * pv[j];
  }
  return m;
}

std::array<double, 3> barycentric_from_log(const std::array<double, 3>& log_rel) {
  const auto b = normalize_log_weights(log_rel);
  return {b[0], b[1], b[2]};
}

std::vector<AnomalyReport> anomaly_scores(const ThdpPosterior& p, const std::vector<Trajectory>& trajs,
                                          const Codebook& cb, double q) {
  if (!(q > 0.0 && q < 1.0)) throw InvalidInput("anomaly quantile must lie in (0, 1)");
  if (trajs.empty()) throw InvalidInput("no trajectories to score");
  const std::size_t K = p.flow_count();
  std::vector<AnomalyReport> out(trajs.size());
  std::vector<std::array<double, 3>> dims(trajs.size());
  std::vector<double> scores(trajs.size());
  std::vector<double> buf(K);
  for (std::size_t i = 0; i < trajs.size(); ++i) {
    const auto ll = trajectory_log_likelihood(p, trajs[i], cb);
    const double n = static_cast<double>(ll.observations);
    auto mix = [&](auto piece) {
      for (std::size_t k = 0; k < K; ++k) buf[k] = log_weight(p, k) + piece(k) / n;
      return log_sum_exp(buf);
    };
    out[i].traj_id = trajs[i].id;
    out[i].score = mix([&](std::size_t k) { return ll.space[k] + ll.time[k] + ll.speed[k]; });
    dims[i] = {mix([&](std::size_t k) { return ll.space[k]; }), mix([&](std::size_t k) { return ll.time[k]; }),
               mix([&](std::size_t k) { return ll.speed[k]; })};
    scores[i] = out[i].score;
  }
  std::array<double, 3> best;
  best.fill(-std::numeric_limits<double>::infinity());
  for (const auto& d : dims)
    for (int j = 0; j < 3; ++j) best[j] = std::max(best[j], d[j]);
  const double cut = quantile(scores, q);
  for (std::size_t i = 0; i < trajs.size(); ++i) {
    const auto b = barycentric_from_log({dims[i][0] - best[0], dims[i][1] - best[1], dims[i][2] - best[2]});
    out[i].b_space = b[0];
    out[i].b_time = b[1];
    out[i].b_speed = b[2];
    out[i].flagged = scores[i] < cut;
  }
  return out;
}

}  // namespace thdp
