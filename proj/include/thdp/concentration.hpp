// Apache License, Version 2.0, refer to LICENSE.txt

#pragma once

#include <cstdint>
#include <span>

#include "thdp/random.hpp"

namespace thdp {

/// Gamma(shape, rate) prior on a DP concentration.
struct GammaPrior {
  double shape = 1.0;
  double rate = 1.0;

  bool operator==(const GammaPrior&) const = default;
};

/// Auxiliary-variable update for the top-level concentration given K dishes
/// served on m tables. Draws from the prior when there is no data.
double resample_top_concentration(double current, std::int64_t dishes, std::int64_t tables,
                                  const GammaPrior& prior, Rng& rng, int iterations = 20);

/// Auxiliary-variable update for a concentration shared by all restaurants.
/// `customers[j]` is the number of customers in restaurant j; `tables` is the
/// total number of tables over all restaurants.
double resample_group_concentration(double current, std::span<const std::int64_t> customers,
                                    std::int64_t tables, const GammaPrior& prior, Rng& rng,
                                    int iterations = 20);

}  // namespace thdp
