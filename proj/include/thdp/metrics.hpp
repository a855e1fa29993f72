// Apache License, Version 2.0, refer to LICENSE.txt

#pragma once

#include <optional>
#include <string>
#include <vector>

#include "thdp/posterior.hpp"
#include "thdp/random.hpp"
#include "thdp/trajectory.hpp"

namespace thdp {

enum class AlVariant { Overall, SpaceTime, SpaceSpeed, TimeSpeed, SpaceOnly, TimeOnly, SpeedOnly };

inline constexpr AlVariant kAllAlVariants[] = {AlVariant::Overall,   AlVariant::SpaceTime, AlVariant::SpaceSpeed,
                                               AlVariant::TimeSpeed, AlVariant::SpaceOnly, AlVariant::TimeOnly,
                                               AlVariant::SpeedOnly};

std::string to_string(AlVariant v);
std::optional<AlVariant> parse_al_variant(const std::string& s);

/// Average over observations of the flow mixture of the variant's factors.
/// Rows with a space factor mix with beta; rows without one mix with the
/// observation's space responsibilities p(k | cell).
double al_metric(AlVariant variant, const std::vector<Observation>& obs, const ThdpPosterior& p);

/// Draws observations from the posterior: flow by beta, then cell, time and speed.
std::vector<Observation> sample_observations(const ThdpPosterior& p, std::size_t n, Rng& rng);

/// Base-2 Jensen-Shannon divergence of two discrete distributions.
double jsd(const std::vector<double>& P, const std::vector<double>& Q);

/// JSD of two densities on a shared grid; inputs are renormalised.
double jsd_on_grid(std::vector<double> P, std::vector<double> Q);

enum class DpdVariant { Space, Time, Speed, TimeSpeed };

std::string to_string(DpdVariant v);
std::optional<DpdVariant> parse_dpd_variant(const std::string& s);

struct DpdQuery {
  std::size_t flow_a = 0;
  std::size_t flow_b = 0;
  DpdVariant variant = DpdVariant::Space;
};

/// Grid spanning 6 standard deviations around every weighted mode of both mixtures.
std::vector<double> union_grid(const std::vector<double>& wa, const std::vector<GaussianMode>& ma,
                               const std::vector<double>& wb, const std::vector<GaussianMode>& mb,
                               std::size_t points);

double dpd(const DpdQuery& q, const ThdpPosterior& A, const ThdpPosterior& B, std::size_t quadrature = 2048);

struct FlowMatch {
  std::size_t flow_a = 0;
  std::size_t flow_b = 0;
  double space_jsd = 0.0;
};

struct FlowMatching {
  std::vector<FlowMatch> pairs;
  std::vector<std::size_t> unmatched_a;
  std::vector<std::size_t> unmatched_b;
};

/// Greedy: A's flows by descending weight each take the free B flow with the smallest space JSD.
FlowMatching match_flows(const ThdpPosterior& A, const ThdpPosterior& B);

std::vector<double> dense_cells(const CellDistribution& d);

}  // namespace thdp
