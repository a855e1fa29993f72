// Apache License, Version 2.0, refer to LICENSE.txt

#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace thdp {

using Rng = std::mt19937_64;

/// Uniform double in [0, 1) built from the top 53 bits of one draw.
inline double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

/// Handles all -inf entries (returns -inf).
double log_sum_exp(std::span<const double> logw);

/// exp(logw - logsumexp(logw)).
std::vector<double> normalize_log_weights(std::span<const double> logw);

/// Inverse-CDF draw from unnormalised log weights. Throws InvalidInput if every
/// weight is zero.
std::size_t sample_log_categorical(std::span<const double> logw, Rng& rng);

/// Inverse-CDF draw from non-negative linear weights.
std::size_t sample_categorical(std::span<const double> w, Rng& rng);

double sample_gamma(double shape, double rate, Rng& rng);
double sample_beta(double a, double b, Rng& rng);
double sample_normal(double mean, double sd, Rng& rng);
std::vector<double> sample_dirichlet(std::span<const double> alpha, Rng& rng);

/// k distinct indices from [0, n), uniformly, in draw order.
std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k, Rng& rng);

}  // namespace thdp
