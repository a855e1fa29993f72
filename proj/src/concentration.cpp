// Apache License, Version 2.0, refer to LICENSE.txt

#include "thdp/concentration.hpp"

#include <cmath>

namespace thdp {

double resample_top_concentration(double current, std::int64_t dishes, std::int64_t tables,
                                  const GammaPrior& prior, Rng& rng, int iterations) {
  if (dishes <= 0 || tables <= 0) return sample_gamma(prior.shape, prior.rate, rng);
  const double k = static_cast<double>(dishes);
  const double m = static_cast<double>(tables);
  double value = current;
  for (int it = 0; it < iterations; ++it) {
    const double eta = sample_beta(value + 1.0, m, rng);
    const double rate = prior.rate - std::log(eta);
    const double odds = (prior.shape + k - 1.0) / (m * rate);
    const double pi = odds / (1.0 + odds);
    const double shape = uniform01(rng) < pi ? prior.shape + k : prior.shape + k - 1.0;
    value = sample_gamma(shape > 0.0 ? shape : prior.shape, rate, rng);
  }
  return value;
}

double resample_group_concentration(double current, std::span<const std::int64_t> customers,
                                    std::int64_t tables, const GammaPrior& prior, Rng& rng,
                                    int iterations) {
  bool any = false;
  for (auto n : customers) any = any || n > 0;
  if (!any || tables <= 0) return sample_gamma(prior.shape, prior.rate, rng);
  double value = current;
  for (int it = 0; it < iterations; ++it) {
    double sum_log_w = 0.0;
    double sum_s = 0.0;
    for (auto nj : customers) {
      if (nj <= 0) continue;
      const double n = static_cast<double>(nj);
      sum_log_w += std::log(sample_beta(value + 1.0, n, rng));
      sum_s += uniform01(rng) < n / (n + value) ? 1.0 : 0.0;
    }
    const double shape = prior.shape + static_cast<double>(tables) - sum_s;
    value = sample_gamma(shape > 0.0 ? shape : prior.shape, prior.rate - sum_log_w, rng);
  }
  return value;
}

}  // namespace thdp
