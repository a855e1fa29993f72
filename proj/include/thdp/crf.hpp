// Apache License, Version 2.0, refer to LICENSE.txt

#pragma once

#include <cmath>
#include <span>
#include <utility>
#include <vector>

#include "thdp/concentration.hpp"
#include "thdp/hdp_seating.hpp"
#include "thdp/random.hpp"

namespace thdp {

/// Concentrations of one HDP: alpha for the per-restaurant DPs, gamma for the
/// global menu.
struct CrfConcentrations {
  double alpha = 0.1;
  double gamma = 0.1;
  GammaPrior alpha_prior;
  GammaPrior gamma_prior;
};

/// Candidate tables in a restaurant; the last log weight is the new table.
struct TableWeights {
  std::vector<int> tables;
  std::vector<double> log_weights;
};

/// Candidate dishes; the last log weight is a brand new dish.
struct DishWeights {
  std::vector<int> dishes;
  std::vector<double> log_weights;
};

namespace detail {

inline double safe_log(double v) { return v > 0.0 ? std::log(v) : kNegInf; }

/// f_k(x) indexed by dish slot (dead slots hold -inf) plus the prior predictive.
template <class L>
double dish_log_likelihoods(const HdpSeating<L>& s, const typename L::Value& x,
                            std::vector<double>& by_slot) {
  by_slot.assign(s.dish_slots(), kNegInf);
  for (int k = 0; k < static_cast<int>(s.dish_slots()); ++k)
    if (s.dish(k).live) by_slot[k] = s.likelihood().log_predictive(s.dish(k).stats, x);
  return s.likelihood().log_prior_predictive(x);
}

/// log of sum_k m_k f_k + gamma f_new, normalised by (m + gamma).
template <class L>
double new_table_mixture(const HdpSeating<L>& s, std::span<const double> by_slot, double f_new,
                         double gamma) {
  thread_local std::vector<double> terms;
  terms.clear();
  for (int k = 0; k < static_cast<int>(by_slot.size()); ++k)
    if (s.dish(k).live) terms.push_back(std::log(static_cast<double>(s.dish(k).tables)) + by_slot[k]);
  terms.push_back(safe_log(gamma) + f_new);
  const double denom = static_cast<double>(s.total_tables()) + gamma;
  if (denom <= 0.0) return f_new;  // empty menu with gamma = 0
  return log_sum_exp(terms) - std::log(denom);
}

}  // namespace detail

/// Log marginal likelihood of x when it opens a new table in any restaurant.
template <class L>
double new_table_log_likelihood(const HdpSeating<L>& s, const typename L::Value& x, double gamma) {
  std::vector<double> by_slot;
  const double f_new = detail::dish_log_likelihoods(s, x, by_slot);
  return detail::new_table_mixture(s, by_slot, f_new, gamma);
}

/// Table popularity times dish preference for x in restaurant r; the customer
/// must already be removed.
template <class L>
void table_log_weights(const HdpSeating<L>& s, int r, const typename L::Value& x, double alpha,
                       double gamma, TableWeights& out) {
  std::vector<double> by_slot;
  const double f_new = detail::dish_log_likelihoods(s, x, by_slot);
  out.tables = s.open_tables(r);
  out.log_weights.clear();
  for (int t : out.tables) {
    const auto& tab = s.table(r, t);
    out.log_weights.push_back(std::log(static_cast<double>(tab.customers.size())) + by_slot[tab.dish]);
  }
  out.log_weights.push_back(detail::safe_log(alpha) + detail::new_table_mixture(s, by_slot, f_new, gamma));
}

/// Dish popularity m_k times f_k(x), plus gamma times the prior predictive.
template <class L>
void dish_log_weights(const HdpSeating<L>& s, const typename L::Value& x, double gamma,
                      DishWeights& out) {
  std::vector<double> by_slot;
  const double f_new = detail::dish_log_likelihoods(s, x, by_slot);
  out.dishes = s.live_dishes();
  out.log_weights.clear();
  for (int k : out.dishes)
    out.log_weights.push_back(std::log(static_cast<double>(s.dish(k).tables)) + by_slot[k]);
  out.log_weights.push_back(detail::safe_log(gamma) + f_new);
}

/// Dish weights for a whole table's customers, whose statistics must already
/// be detached from the menu.
template <class L>
void table_dish_log_weights(const HdpSeating<L>& s, const typename L::Batch& batch, double gamma,
                            DishWeights& out) {
  out.dishes = s.live_dishes();
  out.log_weights.clear();
  for (int k : out.dishes)
    out.log_weights.push_back(std::log(static_cast<double>(s.dish(k).tables)) +
                              s.likelihood().log_joint(s.dish(k).stats, batch));
  out.log_weights.push_back(detail::safe_log(gamma) + s.likelihood().log_joint_prior(batch));
}

/// Returns an open table of r, or kNone for a new table.
template <class L>
int sample_table(const HdpSeating<L>& s, int r, const typename L::Value& x, double alpha,
                 double gamma, Rng& rng) {
  TableWeights w;
  table_log_weights(s, r, x, alpha, gamma, w);
  const std::size_t i = sample_log_categorical(w.log_weights, rng);
  return i < w.tables.size() ? w.tables[i] : kNone;
}

/// Returns a live dish, or kNone for a new dish.
template <class L>
int sample_dish_for_new_table(const HdpSeating<L>& s, const typename L::Value& x, double gamma,
                              Rng& rng) {
  DishWeights w;
  dish_log_weights(s, x, gamma, w);
  const std::size_t i = sample_log_categorical(w.log_weights, rng);
  return i < w.dishes.size() ? w.dishes[i] : kNone;
}

/// Seats unseated customer c in restaurant r: samples a table and, for a new
/// table, a dish. Returns (table, dish).
template <class L>
std::pair<int, int> seat_customer(HdpSeating<L>& s, int c, int r, double alpha, double gamma,
                                  Rng& rng) {
  thread_local std::vector<double> by_slot;
  thread_local std::vector<double> logw;
  thread_local std::vector<int> cand;
  const auto& x = s.value(c);
  const double f_new = detail::dish_log_likelihoods(s, x, by_slot);

  cand.clear();
  logw.clear();
  if (r < static_cast<int>(s.restaurant_slots())) {
    const auto& tables = s.restaurant(r).tables;
    for (int t = 0; t < static_cast<int>(tables.size()); ++t) {
      if (!tables[t].open) continue;
      cand.push_back(t);
      logw.push_back(std::log(static_cast<double>(tables[t].customers.size())) + by_slot[tables[t].dish]);
    }
  }
  logw.push_back(detail::safe_log(alpha) + detail::new_table_mixture(s, by_slot, f_new, gamma));
  const std::size_t i = sample_log_categorical(logw, rng);
  if (i < cand.size()) {
    s.seat(c, r, cand[i]);
    return {cand[i], s.table(r, cand[i]).dish};
  }

  cand.clear();
  logw.clear();
  for (int k = 0; k < static_cast<int>(s.dish_slots()); ++k) {
    if (!s.dish(k).live) continue;
    cand.push_back(k);
    logw.push_back(std::log(static_cast<double>(s.dish(k).tables)) + by_slot[k]);
  }
  logw.push_back(detail::safe_log(gamma) + f_new);
  const std::size_t j = sample_log_categorical(logw, rng);
  const int dish = j < cand.size() ? cand[j] : s.new_dish();
  const int t = s.open_table(r, dish);
  s.seat(c, r, t);
  return {t, dish};
}

/// Resamples the dish of table t in restaurant r from its customers' joint
/// predictive. Returns the chosen dish.
template <class L>
int sample_table_dish(HdpSeating<L>& s, int r, int t, double gamma, Rng& rng) {
  std::vector<typename L::Value> vals;
  for (int c : s.table(r, t).customers) vals.push_back(s.value(c));
  s.detach_table(r, t);
  const auto batch = s.likelihood().batch(vals);
  DishWeights w;
  table_dish_log_weights(s, batch, gamma, w);
  const std::size_t i = sample_log_categorical(w.log_weights, rng);
  const int dish = i < w.dishes.size() ? w.dishes[i] : s.new_dish();
  s.attach_table(r, t, dish);
  return dish;
}

/// Every customer at one table per restaurant, every table on one dish.
template <class L>
void initialize_one_dish(HdpSeating<L>& s, std::span<const int> restaurant_of) {
  if (restaurant_of.size() != s.customer_count())
    throw InvalidInput("restaurant assignment size mismatch");
  if (s.customer_count() == 0) return;
  const int dish = s.new_dish();
  std::vector<int> table_in;
  for (std::size_t c = 0; c < restaurant_of.size(); ++c) {
    const int r = restaurant_of[c];
    if (r < 0) throw InvalidInput("negative restaurant index");
    if (r >= static_cast<int>(table_in.size())) table_in.resize(r + 1, kNone);
    if (table_in[r] == kNone) table_in[r] = s.open_table(r, dish);
    s.seat(static_cast<int>(c), r, table_in[r]);
  }
}

template <class L>
void resample_concentrations(const HdpSeating<L>& s, CrfConcentrations& conc, Rng& rng) {
  const auto counts = s.restaurant_customer_counts();
  conc.alpha = resample_group_concentration(conc.alpha, counts, s.total_tables(), conc.alpha_prior, rng);
  conc.gamma = resample_top_concentration(conc.gamma, s.live_dish_count(), s.total_tables(),
                                          conc.gamma_prior, rng);
}

/// One Gibbs pass: customers then tables, restaurant by restaurant, then the
/// concentrations when `resample` is set.
template <class L>
void crf_sweep(HdpSeating<L>& s, CrfConcentrations& conc, Rng& rng, bool resample = true) {
  std::vector<std::vector<int>> buckets(s.restaurant_slots());
  for (int c = 0; c < static_cast<int>(s.customer_count()); ++c)
    if (s.seated(c)) buckets[s.restaurant_of(c)].push_back(c);
  for (int r = 0; r < static_cast<int>(buckets.size()); ++r) {
    if (buckets[r].empty()) continue;
    for (int c : buckets[r]) {
      s.remove_customer(c);
      seat_customer(s, c, r, conc.alpha, conc.gamma, rng);
    }
    for (int t : s.open_tables(r)) sample_table_dish(s, r, t, conc.gamma, rng);
  }
  if (resample) resample_concentrations(s, conc, rng);
}

/// Global dish weights: a Dirichlet(m_1, ..., m_K, gamma) draw, or its mean.
struct HdpWeights {
  std::vector<int> dishes;
  std::vector<double> weights;  // sums to 1 together with new_weight
  double new_weight = 0.0;
};

template <class L>
HdpWeights extract_hdp_weights(const HdpSeating<L>& s, double gamma, Rng& rng, bool draw) {
  HdpWeights out;
  out.dishes = s.live_dishes();
  std::vector<double> alpha;
  for (int k : out.dishes) alpha.push_back(static_cast<double>(s.dish(k).tables));
  alpha.push_back(gamma);
  std::vector<double> w;
  if (draw) {
    w = sample_dirichlet(alpha, rng);
  } else {
    double total = 0.0;
    for (double a : alpha) total += a;
    for (double a : alpha) w.push_back(a / total);
  }
  out.new_weight = w.back();
  w.pop_back();
  out.weights = std::move(w);
  return out;
}

}  // namespace thdp
