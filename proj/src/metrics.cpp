// Apache License, Version 2.0, refer to LICENSE.txt

#include "thdp/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "thdp/error.hpp"

namespace thdp {

namespace {

constexpr const char* kAlNames[] = {"overall",    "space_time", "space_speed", "time_speed",
                                    "space_only", "time_only",  "speed_only"};
constexpr const char* kDpdNames[] = {"space", "time", "speed", "time_speed"};

bool has_space(AlVariant v) {
  return v == AlVariant::Overall || v == AlVariant::SpaceTime || v == AlVariant::SpaceSpeed ||
         v == AlVariant::SpaceOnly;
}
bool has_time(AlVariant v) {
  return v == AlVariant::Overall || v == AlVariant::SpaceTime || v == AlVariant::TimeSpeed ||
         v == AlVariant::TimeOnly;
}
bool has_speed(AlVariant v) {
  return v == AlVariant::Overall || v == AlVariant::SpaceSpeed || v == AlVariant::TimeSpeed ||
         v == AlVariant::SpeedOnly;
}

double sample_mixture(const std::vector<double>& w, const std::vector<GaussianMode>& modes, Rng& rng) {
  const auto& m = modes[sample_categorical(w, rng)];
  return sample_normal(m.mean, std::sqrt(m.variance), rng);
}

std::vector<double> mixture_on_grid(const std::vector<double>& w, const std::vector<GaussianMode>& modes,
                                    const std::vector<double>& grid) {
  std::vector<double> out(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) out[i] = std::exp(log_mixture_density(w, modes, grid[i]));
  return out;
}

void check_flow(const ThdpPosterior& p, std::size_t k) {
  if (k >= p.flow_count()) throw InvalidInput("flow index out of range");
}

}  // namespace

std::string to_string(AlVariant v) { return kAlNames[static_cast<int>(v)]; }

std::optional<AlVariant> parse_al_variant(const std::string& s) {
  for (int i = 0; i < 7; ++i)
    if (s == kAlNames[i]) return static_cast<AlVariant>(i);
  return std::nullopt;
}

std::string to_string(DpdVariant v) { return kDpdNames[static_cast<int>(v)]; }

std::optional<DpdVariant> parse_dpd_variant(const std::string& s) {
  for (int i = 0; i < 4; ++i)
    if (s == kDpdNames[i]) return static_cast<DpdVariant>(i);
  return std::nullopt;
}

double al_metric(AlVariant variant, const std::vector<Observation>& obs, const ThdpPosterior& p) {
  if (obs.empty()) throw InvalidInput("AL metric needs at least one observation");
  if (p.flows.empty()) throw InvalidInput("posterior has no flows");
  if ((has_time(variant) && !p.has_time()) || (has_speed(variant) && !p.has_speed()))
    throw InvalidInput("posterior lacks a dimension required by " + to_string(variant));
  const std::size_t K = p.flow_count();
  std::vector<double> space(K);
  double total = 0.0;
  for (const Observation& o : obs) {
    double norm = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
      space[k] = p.flows[k].weight * std::exp(flow_space_log_prob(p, k, o.cell));
      norm += space[k];
    }
    double s = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
      double term;
      if (has_space(variant)) term = space[k];
      else term = norm > 0.0 ? space[k] / norm : p.flows[k].weight;
      double lf = 0.0;
      if (has_time(variant)) lf += flow_time_log_density(p, k, o.time);
      if (has_speed(variant)) lf += flow_speed_log_density(p, k, o.speed);
      s += term * std::exp(lf);
    }
    total += s;
  }
  return total / static_cast<double>(obs.size());
}

std::vector<Observation> sample_observations(const ThdpPosterior& p, std::size_t n, Rng& rng) {
  if (p.flows.empty()) throw InvalidInput("posterior has no flows");
  std::vector<double> beta(p.flow_count());
  for (std::size_t k = 0; k < beta.size(); ++k) beta[k] = p.flows[k].weight;
  std::vector<std::vector<double>> cells(p.flow_count());
  for (std::size_t k = 0; k < beta.size(); ++k) cells[k] = dense_cells(p.flows[k].cells);
  std::vector<Observation> out(n);
  for (auto& o : out) {
    const std::size_t k = sample_categorical(beta, rng);
    o.cell = static_cast<Cell>(sample_categorical(cells[k], rng));
    if (p.has_time()) o.time = sample_mixture(p.flows[k].time_weights, p.time_modes, rng);
    if (p.has_speed()) o.speed = sample_mixture(p.flows[k].speed_weights, p.speed_modes, rng);
  }
  return out;
}

double jsd(const std::vector<double>& P, const std::vector<double>& Q) {
  if (P.size() != Q.size() || P.empty()) throw InvalidInput("JSD needs two distributions on the same support");
  auto part = [](double x, double m) { return x > 0.0 ? x * std::log2(x / m) : 0.0; };
  double s = 0.0;
  for (std::size_t i = 0; i < P.size(); ++i) {
    const double m = 0.5 * (P[i] + Q[i]);
    s += part(P[i], m) + part(Q[i], m);
  }
  return std::clamp(0.5 * s, 0.0, 1.0);
}

double jsd_on_grid(std::vector<double> P, std::vector<double> Q) {
  const double sp = std::accumulate(P.begin(), P.end(), 0.0);
  const double sq = std::accumulate(Q.begin(), Q.end(), 0.0);
  if (!(sp > 0.0) || !(sq > 0.0)) throw InvalidInput("density has no mass on the grid");
  for (double& x : P) x /= sp;
  for (double& x : Q) x /= sq;
  return jsd(P, Q);
}

std::vector<double> union_grid(const std::vector<double>& wa, const std::vector<GaussianMode>& ma,
                               const std::vector<double>& wb, const std::vector<GaussianMode>& mb,
                               std::size_t points) {
  if (points < 2) throw InvalidInput("quadrature needs at least two points");
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  auto span = [&](const std::vector<double>& w, const std::vector<GaussianMode>& m) {
    for (std::size_t l = 0; l < m.size(); ++l) {
      if (w[l] <= 0.0) continue;
      const double sd = std::sqrt(m[l].variance);
      lo = std::min(lo, m[l].mean - 6.0 * sd);
      hi = std::max(hi, m[l].mean + 6.0 * sd);
    }
  };
  span(wa, ma);
  span(wb, mb);
  if (!(hi > lo)) throw InvalidInput("profiles have no weighted modes");
  std::vector<double> g(points);
  for (std::size_t i = 0; i < points; ++i) g[i] = lo + (hi - lo) * static_cast<double>(i) / (points - 1);
  return g;
}

std::vector<double> dense_cells(const CellDistribution& d) {
  std::vector<double> v(d.vocabulary, d.background);
  for (const auto& [c, pr] : d.entries) v[c] = pr;
  return v;
}

double dpd(const DpdQuery& q, const ThdpPosterior& A, const ThdpPosterior& B, std::size_t quadrature) {
  check_flow(A, q.flow_a);
  check_flow(B, q.flow_b);
  const Flow& fa = A.flows[q.flow_a];
  const Flow& fb = B.flows[q.flow_b];
  auto need = [](bool ok) {
    if (!ok) throw InvalidInput("posterior lacks the profile needed for this query");
  };
  switch (q.variant) {
    case DpdVariant::Space:
      if (A.codebook.vocabulary() != B.codebook.vocabulary() || A.codebook.rows != B.codebook.rows)
        throw InvalidInput("space comparison needs matching codebook dimensions");
      return jsd(dense_cells(fa.cells), dense_cells(fb.cells));
    case DpdVariant::Time: {
      need(A.has_time() && B.has_time());
      const auto g = union_grid(fa.time_weights, A.time_modes, fb.time_weights, B.time_modes, quadrature);
      return jsd_on_grid(mixture_on_grid(fa.time_weights, A.time_modes, g),
                         mixture_on_grid(fb.time_weights, B.time_modes, g));
    }
    case DpdVariant::Speed: {
      need(A.has_speed() && B.has_speed());
      const auto g = union_grid(fa.speed_weights, A.speed_modes, fb.speed_weights, B.speed_modes, quadrature);
      return jsd_on_grid(mixture_on_grid(fa.speed_weights, A.speed_modes, g),
                         mixture_on_grid(fb.speed_weights, B.speed_modes, g));
    }
    case DpdVariant::TimeSpeed: {
      need(A.has_time() && B.has_time() && A.has_speed() && B.has_speed());
      const auto gt = union_grid(fa.time_weights, A.time_modes, fb.time_weights, B.time_modes, quadrature);
      const auto gv = union_grid(fa.speed_weights, A.speed_modes, fb.speed_weights, B.speed_modes, quadrature);
      const auto ta = mixture_on_grid(fa.time_weights, A.time_modes, gt);
      const auto tb = mixture_on_grid(fb.time_weights, B.time_modes, gt);
      const auto va = mixture_on_grid(fa.speed_weights, A.speed_modes, gv);
      const auto vb = mixture_on_grid(fb.speed_weights, B.speed_modes, gv);
      // separable joint: normalise the marginals then sum the JSD terms cell by cell
      auto norm = [](std::vector<double> v) {
        const double s = std::accumulate(v.begin(), v.end(), 0.0);
        if (!(s > 0.0)) throw InvalidInput("density has no mass on the grid");
        for (double& x : v) x /= s;
        return v;
      };
      const auto pa = norm(ta), pb = norm(tb), sa = norm(va), sb = norm(vb);
      auto part = [](double x, double m) { return x > 0.0 ? x * std::log2(x / m) : 0.0; };
      double s = 0.0;
      for (std::size_t i = 0; i < gt.size(); ++i)
        for (std::size_t j = 0; j < gv.size(); ++j) {
          const double x = pa[i] * sa[j], y = pb[i] * sb[j];
          const double m = 0.5 * (x + y);
          s += part(x, m) + part(y, m);
        }
      return std::clamp(0.5 * s, 0.0, 1.0);
    }
  }
  throw InvalidInput("unknown DPD variant");
}

FlowMatching match_flows(const ThdpPosterior& A, const ThdpPosterior& B) {
  FlowMatching out;
  std::vector<std::size_t> order(A.flow_count());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return A.flows[a].weight > A.flows[b].weight; });
  std::vector<std::vector<double>> dense_b(B.flow_count());
  for (std::size_t j = 0; j < dense_b.size(); ++j) dense_b[j] = dense_cells(B.flows[j].cells);
  std::vector<bool> used(B.flow_count(), false);
  for (std::size_t a : order) {
    const auto da = dense_cells(A.flows[a].cells);
    double best = std::numeric_limits<double>::infinity();
    std::size_t arg = 0;
    for (std::size_t j = 0; j < dense_b.size(); ++j) {
      if (used[j]) continue;
      const double d = jsd(da, dense_b[j]);
      if (d < best) best = d, arg = j;
    }
    if (!std::isfinite(best)) {
      out.unmatched_a.push_back(a);
      continue;
    }
    used[arg] = true;
    out.pairs.push_back({a, arg, best});
  }
  for (std::size_t j = 0; j < used.size(); ++j)
    if (!used[j]) out.unmatched_b.push_back(j);
  return out;
}

}  // namespace thdp
