// Apache License, Version 2.0, refer to LICENSE.txt

#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "thdp/codebook.hpp"
#include "thdp/crf.hpp"
#include "thdp/hdp_seating.hpp"
#include "thdp/posterior.hpp"
#include "thdp/trajectory.hpp"

namespace thdp {

/// Flattened observations: observation i is space-, time- and speed-customer i.
struct ThdpData {
  std::vector<Cell> cells;
  std::vector<double> times;
  std::vector<double> speeds;
  std::vector<int> groups;
  std::uint32_t vocabulary = 1;
  int group_count = 1;

  std::size_t size() const { return cells.size(); }
};

ThdpData make_thdp_data(const std::vector<Trajectory>& trajs, const Codebook& cb);

/// The six concentrations (space, time, speed; each with a restaurant-level
/// alpha and a menu-level gamma) and the customer-selection size.
struct HyperParams {
  CrfConcentrations space;
  CrfConcentrations time;
  CrfConcentrations speed;
  int customer_selection = 1000;

  static HyperParams with_defaults(double initial = 0.1, GammaPrior prior = {});
};

/// Space-HDP over cells with restaurants = data groups; Time- and Speed-HDPs
/// whose restaurants are the live space dishes.
struct ThdpSeating {
  SpaceSeating space;
  ScalarSeating time;
  ScalarSeating speed;

  ThdpSeating(const ThdpData& data, double eta, const NigPrior& time_prior,
              const NigPrior& speed_prior);

  /// Recounts all three seatings and checks the time/speed restaurant of
  /// every observation equals the dish of its space table.
  void check_consistency() const;
};

/// Log restaurant preferences of a time (or speed) value, marginalised over
/// the tables of each restaurant. Indexed by restaurant slot; empty
/// restaurants and unknown slots take `fresh`, the preference of a brand new
/// restaurant.
struct RestaurantPreferences {
  std::vector<double> by_restaurant;
  double fresh = 0.0;

  double at(int restaurant) const {
    return restaurant >= 0 && restaurant < static_cast<int>(by_restaurant.size())
               ? by_restaurant[restaurant]
               : fresh;
  }
};

void restaurant_log_preferences(const ScalarSeating& s, double value, const CrfConcentrations& conc,
                                RestaurantPreferences& out);

/// Single restaurant version; restaurant == kNone means a new restaurant.
double restaurant_log_preference(const ScalarSeating& s, double value, int restaurant,
                                 const CrfConcentrations& conc);

/// Weights for re-seating observation `obs` in its space restaurant. The
/// observation's three customers must already be removed.
struct SpaceWeights {
  TableWeights tables;  // last entry: new table
  DishWeights dishes;   // dish choice if a new table is opened; last entry: new dish
};

void space_table_log_weights(const ThdpSeating& s, int obs, int restaurant, const HyperParams& h,
                             SpaceWeights& out);

/// Draws a space table (kNone for new) for a removed observation.
int sample_space_table(const ThdpSeating& s, int obs, int restaurant, const HyperParams& h, Rng& rng);
/// Draws a dish (kNone for new) for a freshly opened space table.
int sample_space_dish_for_new_table(const ThdpSeating& s, int obs, const HyperParams& h, Rng& rng);

/// Dish weights for a detached space table whose linked customers are
/// removed. The time/speed preference is the product over a uniform subsample
/// of min(customer_selection, |table|) linked customers.
void table_space_dish_log_weights(const ThdpSeating& s, int restaurant, int table,
                                  const HyperParams& h, Rng& rng, DishWeights& out);

/// Re-seats the linked time/speed customers of `observations` into restaurant
/// `new_dish`. Customers already there are left alone; customers sitting in
/// `old_dish` are moved; anywhere else is a ConsistencyError.
void reseat_dependents(ThdpSeating& s, std::span<const int> observations, int old_dish,
                       int new_dish, const HyperParams& h, Rng& rng);

/// Full customer-level move for one observation.
void crfl_customer_step(ThdpSeating& s, int obs, const HyperParams& h, Rng& rng);

/// Full table-level move for one space table. Returns the chosen dish.
int sample_table_space_dish(ThdpSeating& s, int restaurant, int table, const HyperParams& h, Rng& rng);

/// Resamples all six concentrations.
void sample_hyperparameters(const ThdpSeating& s, HyperParams& h, Rng& rng);

/// One CRFL iteration: a CRF pass on the Time- and Speed-HDPs with space
/// fixed, customer and table moves on the Space-HDP, then concentrations.
void crfl_sweep(ThdpSeating& s, HyperParams& h, Rng& rng, bool resample = true);

/// Seats every time/speed customer at one table per restaurant (its space
/// dish), all tables on one dish. Used when leaving the space-only burn-in.
void initialize_dependents(ThdpSeating& s);

struct FitConfig {
  int burn_in = 5000;
  int max_iters = 2000;
  bool early_stop = false;
  int stability_window = 200;
  double stability_tolerance = 1e-3;
  double eta = 0.5;
  HyperParams hypers = HyperParams::with_defaults();
  std::optional<NigPrior> time_prior;
  std::optional<NigPrior> speed_prior;
  ExtractOptions extract;
  /// Debug recount after every sweep.
  bool check_every_sweep = false;
};

struct FitResult {
  ThdpPosterior posterior;
  HyperParams hypers;
  int sweeps = 0;
  std::vector<int> dish_trace;
};

/// Space-only burn-in followed by CRFL sweeps, then posterior extraction.
/// Throws InvalidInput on empty data.
FitResult fit(const ThdpData& data, const Codebook& cb, const FitConfig& cfg, Rng& rng);

/// Posterior from the current state of a seating.
ThdpPosterior extract_posterior(const ThdpSeating& s, const HyperParams& h, const Codebook& cb,
                                const ExtractOptions& opts, Rng& rng);

/// Space-HDP alone (plain CRF on cells); the posterior has flows without time
/// or speed profiles.
FitResult fit_space_only(const ThdpData& data, const Codebook& cb, const FitConfig& cfg, Rng& rng);

}  // namespace thdp
