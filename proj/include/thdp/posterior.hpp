// Apache License, Version 2.0, refer to LICENSE.txt

#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "thdp/codebook.hpp"

namespace thdp {

struct GaussianMode {
  double mean = 0.0;
  double variance = 1.0;
  bool operator==(const GaussianMode&) const = default;
};

/// Sparse cell probabilities; cells not listed share `background`.
struct CellDistribution {
  std::uint32_t vocabulary = 1;
  std::vector<std::pair<Cell, double>> entries;  // sorted by cell
  double background = 0.0;

  double probability(Cell c) const;
  bool operator==(const CellDistribution&) const = default;
};

struct Flow {
  double weight = 0.0;
  CellDistribution cells;
  std::vector<double> time_weights;   // over ThdpPosterior::time_modes
  std::vector<double> speed_weights;  // over ThdpPosterior::speed_modes
  bool operator==(const Flow&) const = default;
};

/// Weighted space flows, each with time and speed profiles over shared
/// global Gaussian menus.
struct ThdpPosterior {
  Codebook codebook;
  std::vector<Flow> flows;
  std::vector<GaussianMode> time_modes;
  std::vector<double> time_mode_weights;
  std::vector<GaussianMode> speed_modes;
  std::vector<double> speed_mode_weights;
  double unseen_weight = 0.0;  // mass left for a new flow by the weight draw
  double pruned_weight = 0.0;  // mass folded away by prune_flows

  std::size_t flow_count() const { return flows.size(); }
  bool has_time() const { return !time_modes.empty(); }
  bool has_speed() const { return !speed_modes.empty(); }
  bool operator==(const ThdpPosterior&) const = default;
};

struct ExtractOptions {
  bool draw_weights = true;  // Dirichlet draw; false gives the Dirichlet mean
  bool draw_params = false;  // dish parameters drawn; false gives posterior means
};

double gaussian_log_density(double x, double mean, double variance);
double gaussian_cdf(double x, double mean, double variance);

/// log sum_l w_l N(x; mode_l); 0 when there are no modes.
double log_mixture_density(const std::vector<double>& weights,
                           const std::vector<GaussianMode>& modes, double x);
double mixture_mass(const std::vector<double>& weights, const std::vector<GaussianMode>& modes,
                    double lo, double hi);

double flow_time_log_density(const ThdpPosterior& p, std::size_t k, double t);
double flow_speed_log_density(const ThdpPosterior& p, std::size_t k, double v);
double flow_space_log_prob(const ThdpPosterior& p, std::size_t k, Cell c);

/// Drops flows with weight below `threshold`, renormalises the rest and
/// records the folded mass in pruned_weight.
ThdpPosterior prune_flows(const ThdpPosterior& p, double threshold);
std::size_t significant_flow_count(const ThdpPosterior& p, double threshold);

/// Throws InvalidInput when weights do not sum to 1 or sizes disagree.
void validate_posterior(const ThdpPosterior& p);

}  // namespace thdp
