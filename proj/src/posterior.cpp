// Apache License, Version 2.0, refer to LICENSE.txt

#include "thdp/posterior.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "thdp/error.hpp"
#include "thdp/random.hpp"

namespace thdp {

double CellDistribution::probability(Cell c) const {
  auto it = std::lower_bound(entries.begin(), entries.end(), c,
                             [](const std::pair<Cell, double>& e, Cell v) { return e.first < v; });
  if (it != entries.end() && it->first == c) return it->second;
  return background;
}

double gaussian_log_density(double x, double mean, double variance) {
  const double d = x - mean;
  return -0.5 * (std::log(2.0 * std::numbers::pi * variance) + d * d / variance);
}

double gaussian_cdf(double x, double mean, double variance) {
  if (std::isinf(x)) return x > 0 ? 1.0 : 0.0;
  return 0.5 * std::erfc(-(x - mean) / std::sqrt(2.0 * variance));
}

double log_mixture_density(const std::vector<double>& weights,
                           const std::vector<GaussianMode>& modes, double x) {
  if (modes.empty()) return 0.0;
  thread_local std::vector<double> terms;
  terms.clear();
  for (std::size_t l = 0; l < modes.size(); ++l) {
    if (weights[l] <= 0.0) continue;
    terms.push_back(std::log(weights[l]) + gaussian_log_density(x, modes[l].mean, modes[l].variance));
  }
  return log_sum_exp(terms);
}

double mixture_mass(const std::vector<double>& weights, const std::vector<GaussianMode>& modes,
                    double lo, double hi) {
  double m = 0.0;
  for (std::size_t l = 0; l < modes.size(); ++l)
    m += weights[l] * (gaussian_cdf(hi, modes[l].mean, modes[l].variance) -
                       gaussian_cdf(lo, modes[l].mean, modes[l].variance));
  return m;
}

double flow_time_log_density(const ThdpPosterior& p, std::size_t k, double t) {
  return log_mixture_density(p.flows[k].time_weights, p.time_modes, t);
}

double flow_speed_log_density(const ThdpPosterior& p, std::size_t k, double v) {
  return log_mixture_density(p.flows[k].speed_weights, p.speed_modes, v);
}

double flow_space_log_prob(const ThdpPosterior& p, std::size_t k, Cell c) {
  if (c >= p.codebook.vocabulary()) throw InvalidInput("cell outside the posterior codebook");
  const double pr = p.flows[k].cells.probability(c);
  return pr > 0.0 ? std::log(pr) : -std::numeric_limits<double>::infinity();
}

ThdpPosterior prune_flows(const ThdpPosterior& p, double threshold) {
  ThdpPosterior out = p;
  out.flows.clear();
  double kept = 0.0;
  for (const Flow& f : p.flows)
    if (f.weight >= threshold) {
      out.flows.push_back(f);
      kept += f.weight;
    }
  if (out.flows.empty()) throw InvalidInput("pruning removed every flow");
  for (Flow& f : out.flows) f.weight /= kept;
  out.pruned_weight = 1.0 - kept;
  return out;
}

std::size_t significant_flow_count(const ThdpPosterior& p, double threshold) {
  return static_cast<std::size_t>(std::count_if(
      p.flows.begin(), p.flows.end(), [&](const Flow& f) { return f.weight >= threshold; }));
}

namespace {

void check_simplex(const std::vector<double>& w, const char* what) {
  double s = 0.0;
  for (double v : w) {
    if (!(v >= 0.0)) throw InvalidInput(std::string(what) + ": negative or NaN weight");
    s += v;
  }
  if (std::abs(s - 1.0) > 1e-9) throw InvalidInput(std::string(what) + ": weights do not sum to 1");
}

}  // namespace

void validate_posterior(const ThdpPosterior& p) {
  if (p.flows.empty()) throw InvalidInput("posterior has no flows");
  std::vector<double> beta;
  for (const Flow& f : p.flows) beta.push_back(f.weight);
  check_simplex(beta, "flow weights");
  for (const Flow& f : p.flows) {
    if (f.cells.vocabulary != p.codebook.vocabulary()) throw InvalidInput("flow vocabulary mismatch");
    if (f.time_weights.size() != p.time_modes.size()) throw InvalidInput("time profile size mismatch");
    if (f.speed_weights.size() != p.speed_modes.size())
      throw InvalidInput("speed profile size mismatch");
    if (p.has_time()) check_simplex(f.time_weights, "time profile");
    if (p.has_speed()) check_simplex(f.speed_weights, "speed profile");
  }
  for (const auto& m : p.time_modes)
    if (!(m.variance > 0.0)) throw InvalidInput("non-positive time variance");
  for (const auto& m : p.speed_modes)
    if (!(m.variance > 0.0)) throw InvalidInput("non-positive speed variance");
}

}  // namespace thdp
