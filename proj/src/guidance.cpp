// Apache License, Version 2.0, refer to LICENSE.txt

#include "thdp/guidance.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "thdp/error.hpp"

namespace thdp {

namespace {

constexpr double kLog2Pi = 1.8378770664093453;

using Mat2 = Eigen::Matrix2d;

double gaussian2_log(const Point2& x, const Point2& mu, const Mat2& cov) {
  const Eigen::LLT<Mat2> llt(cov);
  const Point2 z = llt.matrixL().solve(x - mu);
  const double logdet = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  return -0.5 * (2.0 * kLog2Pi + logdet + z.squaredNorm());
}

template <int N>
Eigen::Matrix<double, N, N> psd_clip(const Eigen::Matrix<double, N, N>& m) {
  const Eigen::Matrix<double, N, N> s = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix<double, N, N>> es(s);
  const auto vals = es.eigenvalues().cwiseMax(0.0);
  Eigen::Matrix<double, N, N> out = es.eigenvectors() * vals.asDiagonal() * es.eigenvectors().transpose();
  return 0.5 * (out + out.transpose());
}

template <int N>
Eigen::Matrix<double, N, 1> sample_gaussian(const Eigen::Matrix<double, N, 1>& mean,
                                            const Eigen::Matrix<double, N, N>& cov, Rng& rng) {
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix<double, N, N>> es(0.5 * (cov + cov.transpose()));
  Eigen::Matrix<double, N, 1> z;
  for (int i = 0; i < N; ++i) z(i) = sample_normal(0.0, 1.0, rng);
  const Eigen::Matrix<double, N, 1> scale = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return mean + es.eigenvectors() * scale.cwiseProduct(z);
}

Mat3 pinv(const Mat3& m) { return Eigen::CompleteOrthogonalDecomposition<Mat3>(m).pseudoInverse(); }

Vec3 homogeneous(const Point2& p) { return {p.x(), p.y(), 1.0}; }

Mat3 omega() { return Mat3::Identity() * kObservationNoise; }

struct EmRun {
  Gmm2 g;
  double ll = 0.0;
};

EmRun run_gmm_em(const std::vector<Point2>& pts, int K, const GmmOptions& opts) {
  const std::size_t n = pts.size();
  Point2 centroid = Point2::Zero();
  for (const auto& p : pts) centroid += p;
  centroid /= static_cast<double>(n);
  Mat2 cov = Mat2::Zero();
  for (const auto& p : pts) cov += (p - centroid) * (p - centroid).transpose();
  cov /= static_cast<double>(n);
  const double floor = std::max(opts.variance_floor, opts.relative_floor * 0.5 * cov.trace());
  cov += Mat2::Identity() * floor;

  // farthest-point seeding, deterministic
  std::vector<Point2> seeds;
  std::size_t first = 0;
  for (std::size_t i = 1; i < n; ++i)
    if ((pts[i] - centroid).squaredNorm() < (pts[first] - centroid).squaredNorm()) first = i;
  seeds.push_back(pts[first]);
  std::vector<double> dist(n, std::numeric_limits<double>::infinity());
  while (static_cast<int>(seeds.size()) < K) {
    std::size_t arg = 0;
    double best = -1.0;
    for (std::size_t i = 0; i < n; ++i) {
      dist[i] = std::min(dist[i], (pts[i] - seeds.back()).squaredNorm());
      if (dist[i] > best) best = dist[i], arg = i;
    }
    seeds.push_back(pts[arg]);
  }

  EmRun r;
  r.g.weights.assign(K, 1.0 / K);
  r.g.means = seeds;
  r.g.covariances.assign(K, cov);
  Eigen::MatrixXd resp(n, K);
  double prev = -std::numeric_limits<double>::infinity();
  for (int it = 0; it < opts.max_iters; ++it) {
    double ll = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double mx = -std::numeric_limits<double>::infinity();
      for (int k = 0; k < K; ++k) {
        resp(i, k) = r.g.weights[k] > 0.0
                         ? std::log(r.g.weights[k]) + gaussian2_log(pts[i], r.g.means[k], r.g.covariances[k])
                         : -std::numeric_limits<double>::infinity();
        mx = std::max(mx, resp(i, k));
      }
      double s = 0.0;
      for (int k = 0; k < K; ++k) s += std::exp(resp(i, k) - mx);
      ll += mx + std::log(s);
      for (int k = 0; k < K; ++k) resp(i, k) = std::exp(resp(i, k) - mx) / s;
    }
    r.ll = ll;
    if (std::abs(ll - prev) <= opts.tolerance * (1.0 + std::abs(ll))) break;
    prev = ll;
    for (int k = 0; k < K; ++k) {
      const double nk = resp.col(k).sum();
      if (nk < 1e-10) {
        r.g.weights[k] = 0.0;
        continue;
      }
      Point2 mu = Point2::Zero();
      for (std::size_t i = 0; i < n; ++i) mu += resp(i, k) * pts[i];
      mu /= nk;
      Mat2 c = Mat2::Zero();
      for (std::size_t i = 0; i < n; ++i) c += resp(i, k) * (pts[i] - mu) * (pts[i] - mu).transpose();
      r.g.means[k] = mu;
      r.g.covariances[k] = c / nk + Mat2::Identity() * floor;
      r.g.weights[k] = nk / static_cast<double>(n);
    }
  }
  return r;
}

}  // namespace

double Gmm2::log_density(const Point2& x) const {
  double mx = -std::numeric_limits<double>::infinity();
  std::vector<double> t(size());
  for (std::size_t k = 0; k < size(); ++k) {
    t[k] = weights[k] > 0.0 ? std::log(weights[k]) + gaussian2_log(x, means[k], covariances[k])
                            : -std::numeric_limits<double>::infinity();
    mx = std::max(mx, t[k]);
  }
  double s = 0.0;
  for (double v : t) s += std::exp(v - mx);
  return mx + std::log(s);
}

Point2 Gmm2::sample(Rng& rng) const {
  const std::size_t k = sample_categorical(weights, rng);
  return sample_gaussian<2>(means[k], covariances[k], rng);
}

Gmm2 fit_endpoint_gmm(const std::vector<Point2>& pts, const GmmOptions& opts) {
  if (pts.size() < 2) throw InvalidInput("endpoint GMM needs at least two points");
  if (opts.max_components < 1) throw InvalidInput("max_components must be >= 1");
  const int kmax = std::min<int>(opts.max_components, static_cast<int>(pts.size()));
  Gmm2 best;
  best.bic = std::numeric_limits<double>::infinity();
  for (int K = 1; K <= kmax; ++K) {
    EmRun r = run_gmm_em(pts, K, opts);
    r.g.bic = -2.0 * r.ll + (6.0 * K - 1.0) * std::log(static_cast<double>(pts.size()));
    if (r.g.bic < best.bic) best = r.g;
  }
  // components that lost all mass carry nothing
  Gmm2 out;
  out.bic = best.bic;
  for (std::size_t k = 0; k < best.size(); ++k)
    if (best.weights[k] > 0.0) {
      out.weights.push_back(best.weights[k]);
      out.means.push_back(best.means[k]);
      out.covariances.push_back(best.covariances[k]);
    }
  double s = 0.0;
  for (double w : out.weights) s += w;
  for (double& w : out.weights) w /= s;
  return out;
}

Gmm2 point_gmm(const Point2& p, double variance_floor) {
  Gmm2 g;
  g.weights = {1.0};
  g.means = {p};
  g.covariances = {Mat2::Identity() * variance_floor};
  return g;
}

SmoothResult smooth_trajectory(const FlowDynamics& dyn, const std::vector<Point2>& xs) {
  const std::size_t T = xs.size();
  if (T < 2) throw InvalidInput("smoothing needs at least two points");
  const Mat3& B = dyn.B;
  const Mat3 Om = omega();
  std::vector<Vec3> m(T), mp(T);
  std::vector<Mat3> P(T), Pp(T);
  SmoothResult r;
  m[0] = homogeneous(xs[0]);
  P[0].setZero();
  for (std::size_t t = 1; t < T; ++t) {
    mp[t] = B * m[t - 1];
    Pp[t] = B * P[t - 1] * B.transpose() + dyn.Lambda;
    Pp[t] = 0.5 * (Pp[t] + Pp[t].transpose());
    const Mat3 S = Pp[t] + Om;
    const Eigen::LLT<Mat3> llt(S);
    const Vec3 innov = homogeneous(xs[t]) - mp[t];
    const Vec3 z = llt.matrixL().solve(innov);
    const double logdet = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
    r.log_likelihood += -0.5 * (3.0 * kLog2Pi + logdet + z.squaredNorm());
    const Mat3 K = llt.solve(Pp[t]).transpose();  // Pp S^-1, both symmetric
    m[t] = mp[t] + K * innov;
    const Mat3 IK = Mat3::Identity() - K;
    P[t] = IK * Pp[t] * IK.transpose() + K * Om * K.transpose();
    P[t] = 0.5 * (P[t] + P[t].transpose());
  }
  std::vector<Vec3> ms(T);
  std::vector<Mat3> Ps(T), J(T, Mat3::Zero());
  ms[T - 1] = m[T - 1];
  Ps[T - 1] = P[T - 1];
  for (std::size_t t = T - 1; t-- > 0;) {
    J[t] = P[t] * B.transpose() * pinv(Pp[t + 1]);
    ms[t] = m[t] + J[t] * (ms[t + 1] - mp[t + 1]);
    Ps[t] = P[t] + J[t] * (Ps[t + 1] - Pp[t + 1]) * J[t].transpose();
    Ps[t] = 0.5 * (Ps[t] + Ps[t].transpose());
  }
  for (std::size_t t = 1; t < T; ++t) {
    const Mat3 cur = Ps[t] + ms[t] * ms[t].transpose();
    const Mat3 prev = Ps[t - 1] + ms[t - 1] * ms[t - 1].transpose();
    const Mat3 cross = Ps[t] * J[t - 1].transpose() + ms[t] * ms[t - 1].transpose();
    r.stats.Ptt += cur;
    r.stats.Pt1t1 += prev;
    r.stats.Ptt1 += cross;
  }
  r.stats.transitions = T - 1;
  double tau = 0.0;
  const double norm = -1.5 * (kLog2Pi + std::log(kObservationNoise));
  for (std::size_t t = 0; t < T; ++t)
    tau += std::exp(norm - 0.5 * (homogeneous(xs[t]) - ms[t]).squaredNorm() / kObservationNoise);
  r.tau_score = tau / static_cast<double>(T);
  r.means = std::move(ms);
  return r;
}

MStepResult m_step_update(const std::vector<LdsStats>& stats, const std::vector<double>& tau) {
  if (stats.empty() || stats.size() != tau.size()) throw InvalidInput("M-step needs one weight per trajectory");
  Mat3 num = Mat3::Zero(), den = Mat3::Zero(), tt = Mat3::Zero();
  double count = 0.0;
  for (std::size_t i = 0; i < stats.size(); ++i) {
    num += tau[i] * stats[i].Ptt1;
    den += tau[i] * stats[i].Pt1t1;
    tt += tau[i] * stats[i].Ptt;
    count += tau[i] * static_cast<double>(stats[i].transitions);
  }
  if (!(count > 0.0)) throw InvalidInput("M-step has no weighted transitions");
  MStepResult r;
  den = 0.5 * (den + den.transpose());
  Eigen::SelfAdjointEigenSolver<Mat3> es(den);
  const double top = es.eigenvalues().cwiseAbs().maxCoeff();
  if (!(es.eigenvalues().minCoeff() > 1e-12 * std::max(top, 1e-300))) {
    den += Mat3::Identity() * 1e-8;
    r.regularized = true;
  }
  r.dynamics.B = den.ldlt().solve(num.transpose()).transpose();
  const Mat3 lam = (tt - r.dynamics.B * num.transpose()) / count;
  r.dynamics.Lambda = psd_clip<3>(lam);
  if (!r.dynamics.B.allFinite() || !r.dynamics.Lambda.allFinite())
    throw ConsistencyError("M-step produced non-finite parameters");
  return r;
}

LdsFit fit_flow_dynamics(const std::vector<std::vector<Point2>>& trajs, const LdsConfig& cfg) {
  std::vector<const std::vector<Point2>*> use;
  for (const auto& t : trajs)
    if (t.size() >= 3) use.push_back(&t);
  if (use.empty()) throw InvalidInput("dynamics need a trajectory with at least three points");

  // start from a least-squares fit on the raw points
  Mat3 num = Mat3::Zero(), den = Mat3::Zero();
  for (const auto* t : use)
    for (std::size_t i = 1; i < t->size(); ++i) {
      const Vec3 a = homogeneous((*t)[i]), b = homogeneous((*t)[i - 1]);
      num += a * b.transpose();
      den += b * b.transpose();
    }
  LdsFit fit;
  fit.dynamics.B = (den + Mat3::Identity() * 1e-8).ldlt().solve(num.transpose()).transpose();
  Mat3 res = Mat3::Zero();
  double n = 0.0;
  for (const auto* t : use)
    for (std::size_t i = 1; i < t->size(); ++i) {
      const Vec3 e = homogeneous((*t)[i]) - fit.dynamics.B * homogeneous((*t)[i - 1]);
      res += e * e.transpose();
      n += 1.0;
    }
  fit.dynamics.Lambda = psd_clip<3>(res / n) + Mat3::Identity() * kObservationNoise;

  std::vector<LdsStats> stats(use.size());
  std::vector<double> tau(use.size());
  for (int it = 0; it < cfg.max_iters; ++it) {
    double ll = 0.0, tau_sum = 0.0;
    for (std::size_t i = 0; i < use.size(); ++i) {
      SmoothResult s = smooth_trajectory(fit.dynamics, *use[i]);
      ll += s.log_likelihood;
      stats[i] = s.stats;
      tau[i] = s.tau_score;
      tau_sum += tau[i];
    }
    for (double& w : tau) w = (cfg.likelihood_tau && tau_sum > 0.0) ? w / tau_sum : 1.0 / use.size();
    fit.log_likelihood.push_back(ll);
    fit.iterations = it + 1;
    if (it > 0) {
      const double prev = fit.log_likelihood[it - 1];
      if (std::abs(ll - prev) <= cfg.tolerance * std::abs(prev)) {
        fit.converged = true;
        break;
      }
    }
    if (it + 1 == cfg.max_iters) break;
    const MStepResult m = m_step_update(stats, tau);
    fit.regularized = fit.regularized || m.regularized;
    fit.dynamics = m.dynamics;
  }
  return fit;
}

std::vector<Point2> sample_guided_trajectory(const FlowDynamics& dyn, const Point2& s1, const Point2& sT,
                                             std::size_t T, Rng& rng) {
  if (T < 2) throw InvalidInput("guided trajectory needs T >= 2");
  Eigen::SelfAdjointEigenSolver<Mat3> es(0.5 * (dyn.Lambda + dyn.Lambda.transpose()));
  const double scale = std::max(1.0, es.eigenvalues().cwiseAbs().maxCoeff());
  if (es.eigenvalues().minCoeff() < -1e-10 * scale) throw InvalidInput("process covariance is not PSD");
  const Mat3& B = dyn.B;
  std::vector<Vec3> m(T);
  std::vector<Mat3> P(T);
  m[0] = homogeneous(s1);
  P[0].setZero();
  for (std::size_t t = 1; t < T; ++t) {
    m[t] = B * m[t - 1];
    P[t] = B * P[t - 1] * B.transpose() + dyn.Lambda;
    P[t] = 0.5 * (P[t] + P[t].transpose());
  }
  std::vector<Point2> out(T);
  out[0] = s1;
  out[T - 1] = sT;
  Vec3 next = homogeneous(sT);
  for (std::size_t t = T - 1; t-- > 1;) {
    const Mat3 J = P[t] * B.transpose() * pinv(P[t + 1]);
    const Vec3 mean = m[t] + J * (next - m[t + 1]);
    const Mat3 cov = P[t] - J * P[t + 1] * J.transpose();
    next = sample_gaussian<3>(mean, cov, rng);
    out[t] = next.head<2>();
  }
  return out;
}

std::vector<Point2> resample_path(const Trajectory& t, double frame_interval) {
  if (!(frame_interval > 0.0)) throw InvalidInput("frame interval must be > 0");
  std::vector<Point2> out;
  const auto& o = t.observations;
  if (o.empty()) return out;
  const double t0 = o.front().time, t1 = o.back().time;
  std::size_t j = 0;
  for (std::size_t i = 0;; ++i) {
    const double tt = t0 + static_cast<double>(i) * frame_interval;
    if (tt > t1 + 1e-9 * frame_interval) break;
    while (j + 1 < o.size() && o[j + 1].time < tt) ++j;
    if (j + 1 >= o.size()) {
      out.emplace_back(o.back().x, o.back().y);
      continue;
    }
    const double span = o[j + 1].time - o[j].time;
    const double u = span > 0.0 ? std::clamp((tt - o[j].time) / span, 0.0, 1.0) : 0.0;
    out.emplace_back(o[j].x + u * (o[j + 1].x - o[j].x), o[j].y + u * (o[j + 1].y - o[j].y));
  }
  return out;
}

double median_frame_interval(const std::vector<Trajectory>& trajs) {
  std::vector<double> d;
  for (const auto& t : trajs)
    for (std::size_t i = 1; i < t.observations.size(); ++i)
      d.push_back(t.observations[i].time - t.observations[i - 1].time);
  if (d.empty()) throw InvalidInput("no frame intervals in the data");
  auto mid = d.begin() + d.size() / 2;
  std::nth_element(d.begin(), mid, d.end());
  return *mid;
}

GuidanceScenario build_scenario(const ThdpPosterior& p, const std::vector<Trajectory>& trajs,
                                const std::vector<FlowAssignment>& assignments, const GuidanceConfig& cfg) {
  if (p.flows.empty()) throw InvalidInput("posterior has no flows");
  if (!p.has_time() || !p.has_speed()) throw InvalidInput("guidance needs time and speed profiles");
  if (assignments.size() != trajs.size()) throw InvalidInput("one assignment per trajectory is required");
  GuidanceScenario sc;
  sc.time_modes = p.time_modes;
  sc.speed_modes = p.speed_modes;
  sc.frame_interval = cfg.frame_interval.value_or(median_frame_interval(trajs));
  for (const auto& t : trajs)
    for (const auto& o : t.observations) sc.horizon = std::max(sc.horizon, o.time);

  std::vector<std::vector<std::size_t>> members(p.flow_count());
  for (std::size_t i = 0; i < trajs.size(); ++i) {
    if (assignments[i].traj_id != trajs[i].id) throw InvalidInput("assignment order does not match trajectories");
    if (assignments[i].flow >= p.flow_count()) throw InvalidInput("assignment names a missing flow");
    if (!trajs[i].observations.empty()) members[assignments[i].flow].push_back(i);
  }
  double total = 0.0;
  for (std::size_t k = 0; k < p.flow_count(); ++k) {
    if (members[k].empty()) continue;
    ScenarioFlow f;
    f.posterior_flow = k;
    f.weight = p.flows[k].weight;
    f.time_weights = p.flows[k].time_weights;
    f.speed_weights = p.flows[k].speed_weights;
    f.trajectories = members[k].size();
    std::vector<Point2> starts, ends;
    std::vector<std::vector<Point2>> paths;
    for (std::size_t i : members[k]) {
      const auto& o = trajs[i].observations;
      starts.emplace_back(o.front().x, o.front().y);
      ends.emplace_back(o.back().x, o.back().y);
      paths.push_back(resample_path(trajs[i], sc.frame_interval));
    }
    if (starts.size() >= 2) {
      f.start = fit_endpoint_gmm(starts, cfg.gmm);
      f.destination = fit_endpoint_gmm(ends, cfg.gmm);
    } else {
      f.start = point_gmm(starts[0], cfg.gmm.variance_floor);
      f.destination = point_gmm(ends[0], cfg.gmm.variance_floor);
    }
    const bool long_enough = std::any_of(paths.begin(), paths.end(), [](const auto& v) { return v.size() >= 3; });
    if (f.trajectories >= cfg.min_trajectories && long_enough)
      f.dynamics = fit_flow_dynamics(paths, cfg.lds).dynamics;
    else
      f.straight_line_fallback = true;
    total += f.weight;
    sc.flows.push_back(std::move(f));
  }
  if (sc.flows.empty() || !(total > 0.0)) throw InvalidInput("no flow received a trajectory");
  for (auto& f : sc.flows) f.weight /= total;
  return sc;
}

std::vector<AgentSpec> sample_agents(const GuidanceScenario& sc, std::size_t n, Rng& rng, bool with_paths) {
  if (n < 1) throw InvalidInput("agent count must be >= 1");
  if (sc.flows.empty()) throw InvalidInput("scenario has no flows");
  std::vector<double> beta;
  for (const auto& f : sc.flows) beta.push_back(f.weight);
  auto mixture_draw = [&](const std::vector<double>& w, const std::vector<GaussianMode>& modes) {
    const auto& m = modes[sample_categorical(w, rng)];
    return sample_normal(m.mean, std::sqrt(m.variance), rng);
  };
  std::vector<AgentSpec> out(n);
  for (auto& a : out) {
    a.flow = sample_categorical(beta, rng);
    const ScenarioFlow& f = sc.flows[a.flow];
    a.start = f.start.sample(rng);
    a.destination = f.destination.sample(rng);
    a.entry_time = -1.0;
    for (int tries = 0; tries < 1000 && !(a.entry_time >= 0.0 && a.entry_time <= sc.horizon); ++tries)
      a.entry_time = mixture_draw(f.time_weights, sc.time_modes);
    a.entry_time = std::clamp(a.entry_time, 0.0, sc.horizon);
    a.desired_speed = 0.0;
    for (int tries = 0; tries < 1000 && !(a.desired_speed > 0.0); ++tries)
      a.desired_speed = mixture_draw(f.speed_weights, sc.speed_modes);
    if (!(a.desired_speed > 0.0)) a.desired_speed = std::numeric_limits<double>::min();
    if (!with_paths) continue;
    const double steps = (a.destination - a.start).norm() / (a.desired_speed * sc.frame_interval);
    const auto T = static_cast<std::size_t>(std::clamp(std::round(steps), 1.0, 100000.0)) + 1;
    if (f.dynamics) {
      a.path = sample_guided_trajectory(*f.dynamics, a.start, a.destination, T, rng);
    } else {
      a.path.resize(T);
      for (std::size_t t = 0; t < T; ++t) {
        const double u = static_cast<double>(t) / static_cast<double>(T - 1);
        a.path[t] = a.start + u * (a.destination - a.start);
      }
      a.path.back() = a.destination;
    }
  }
  return out;
}

}  // namespace thdp
