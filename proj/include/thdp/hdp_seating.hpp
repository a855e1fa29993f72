// Apache License, Version 2.0, refer to LICENSE.txt

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "thdp/concentration.hpp"
#include "thdp/conjugate.hpp"
#include "thdp/error.hpp"
#include "thdp/random.hpp"

namespace thdp {

inline constexpr int kNone = -1;
inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

/// Multinomial dishes over codebook cells with a symmetric Dirichlet base.
struct SpaceLikelihood {
  using Value = Cell;
  using Stats = DirMultStats;
  using Batch = CellBatch;

  std::uint32_t vocabulary = 1;
  double eta = 0.5;

  Stats empty() const { return DirMultStats(vocabulary, eta); }
  double log_predictive(const Stats& s, Value v) const { return log_space_predictive(s, v); }
  double log_prior_predictive(Value) const { return -std::log(static_cast<double>(vocabulary)); }
  Batch batch(std::span<const Value> values) const { return make_cell_batch(values); }
  double log_joint(const Stats& s, const Batch& b) const { return log_space_joint_predictive(s, b); }
  double log_joint_prior(const Batch& b) const {
    return log_space_joint_prior_predictive(vocabulary, eta, b);
  }
  double log_marginal(const Stats& s) const { return log_space_marginal(s); }
};

/// Gaussian dishes with a Normal-Inverse-Gamma base.
struct ScalarLikelihood {
  using Value = double;
  using Stats = NigStats;
  using Batch = NigStats;

  NigPrior prior;

  Stats empty() const { return NigStats(prior); }
  double log_predictive(const Stats& s, Value v) const { return log_scalar_predictive(s, v); }
  double log_prior_predictive(Value v) const { return log_scalar_predictive(NigStats(prior), v); }
  Batch batch(std::span<const Value> values) const {
    NigStats b(prior);
    for (double v : values) b.add(v);
    return b;
  }
  double log_joint(const Stats& s, const Batch& b) const { return log_scalar_joint_predictive(s, b); }
  double log_joint_prior(const Batch& b) const {
    return log_scalar_joint_predictive(NigStats(prior), b);
  }
  double log_marginal(const Stats& s) const { return log_nig_marginal(s); }
};

/// Chinese Restaurant Franchise bookkeeping for one HDP: customers sit at
/// tables inside restaurants, every table serves one dish from a global menu.
/// Empty tables and dishes are recycled immediately.
template <class L>
class HdpSeating {
 public:
  using Value = typename L::Value;
  using Stats = typename L::Stats;

  struct Table {
    bool open = false;
    int dish = kNone;
    std::vector<int> customers;
  };

  struct Restaurant {
    std::vector<Table> tables;
    std::vector<int> free_tables;
    std::int64_t customers = 0;
    int open_tables = 0;
  };

  struct Dish {
    Stats stats;
    bool live = false;
    int tables = 0;
    std::int64_t customers = 0;
  };

  HdpSeating() = default;
  HdpSeating(L likelihood, std::vector<Value> values)
      : likelihood_(std::move(likelihood)),
        values_(std::move(values)),
        restaurant_of_(values_.size(), kNone),
        table_of_(values_.size(), kNone),
        slot_of_(values_.size(), kNone) {}

  const L& likelihood() const { return likelihood_; }
  std::size_t customer_count() const { return values_.size(); }
  const Value& value(int c) const { return values_[c]; }
  const std::vector<Value>& values() const { return values_; }

  bool seated(int c) const { return restaurant_of_[c] != kNone; }
  int restaurant_of(int c) const { return restaurant_of_[c]; }
  int table_of(int c) const { return table_of_[c]; }
  int dish_of(int c) const {
    if (!seated(c)) return kNone;
    return restaurants_[restaurant_of_[c]].tables[table_of_[c]].dish;
  }

  std::size_t restaurant_slots() const { return restaurants_.size(); }
  const Restaurant& restaurant(int r) const { return restaurants_[r]; }
  const Table& table(int r, int t) const { return restaurants_[r].tables[t]; }
  std::size_t dish_slots() const { return dishes_.size(); }
  const Dish& dish(int k) const { return dishes_[k]; }
  bool dish_live(int k) const { return k >= 0 && k < static_cast<int>(dishes_.size()) && dishes_[k].live; }

  std::vector<int> live_dishes() const {
    std::vector<int> out;
    for (int k = 0; k < static_cast<int>(dishes_.size()); ++k)
      if (dishes_[k].live) out.push_back(k);
    return out;
  }
  int live_dish_count() const { return live_dishes_; }
  std::int64_t total_tables() const { return total_tables_; }

  std::vector<int> open_tables(int r) const {
    std::vector<int> out;
    if (r < 0 || r >= static_cast<int>(restaurants_.size())) return out;
    const auto& tables = restaurants_[r].tables;
    for (int t = 0; t < static_cast<int>(tables.size()); ++t)
      if (tables[t].open) out.push_back(t);
    return out;
  }

  /// Customers per restaurant slot, for concentration updates.
  std::vector<std::int64_t> restaurant_customer_counts() const {
    std::vector<std::int64_t> out;
    out.reserve(restaurants_.size());
    for (const auto& r : restaurants_) out.push_back(r.customers);
    return out;
  }

  void ensure_restaurant(int r) {
    if (r < 0) throw InvalidInput("negative restaurant index");
    if (r >= static_cast<int>(restaurants_.size())) restaurants_.resize(r + 1);
  }

  int new_dish() {
    int k;
    if (!free_dishes_.empty()) {
      k = free_dishes_.back();
      free_dishes_.pop_back();
    } else {
      k = static_cast<int>(dishes_.size());
      dishes_.push_back(Dish{likelihood_.empty()});
    }
    dishes_[k].live = true;
    dishes_[k].tables = 0;
    dishes_[k].customers = 0;
    ++live_dishes_;
    return k;
  }

  int open_table(int r, int dish) {
    ensure_restaurant(r);
    if (!dish_live(dish)) throw ConsistencyError("opening a table on a dead dish");
    Restaurant& rest = restaurants_[r];
    int t;
    if (!rest.free_tables.empty()) {
      t = rest.free_tables.back();
      rest.free_tables.pop_back();
    } else {
      t = static_cast<int>(rest.tables.size());
      rest.tables.emplace_back();
    }
    Table& tab = rest.tables[t];
    tab.open = true;
    tab.dish = dish;
    ++rest.open_tables;
    ++dishes_[dish].tables;
    ++total_tables_;
    return t;
  }

  void seat(int c, int r, int t) {
    if (seated(c)) throw ConsistencyError("customer is already seated");
    Table& tab = restaurants_.at(r).tables.at(t);
    if (!tab.open || tab.dish == kNone) throw ConsistencyError("seating at a closed table");
    slot_of_[c] = static_cast<int>(tab.customers.size());
    tab.customers.push_back(c);
    restaurant_of_[c] = r;
    table_of_[c] = t;
    ++restaurants_[r].customers;
    Dish& d = dishes_[tab.dish];
    d.stats.add(values_[c]);
    ++d.customers;
  }

  void remove_customer(int c) {
    if (!seated(c)) throw ConsistencyError("removing an unseated customer");
    const int r = restaurant_of_[c];
    const int t = table_of_[c];
    Restaurant& rest = restaurants_[r];
    Table& tab = rest.tables[t];
    const int slot = slot_of_[c];
    const int moved = tab.customers.back();
    tab.customers[slot] = moved;
    slot_of_[moved] = slot;
    tab.customers.pop_back();
    restaurant_of_[c] = kNone;
    table_of_[c] = kNone;
    slot_of_[c] = kNone;
    --rest.customers;
    if (tab.dish != kNone) {
      Dish& d = dishes_[tab.dish];
      d.stats.remove(values_[c]);
      --d.customers;
    }
    if (tab.customers.empty()) close_table(r, t);
  }

  /// Takes the table's customers off its dish; the table stays open without a dish.
  void detach_table(int r, int t) {
    Table& tab = restaurants_.at(r).tables.at(t);
    if (!tab.open || tab.dish == kNone) throw ConsistencyError("detaching a table without a dish");
    Dish& d = dishes_[tab.dish];
    for (int c : tab.customers) d.stats.remove(values_[c]);
    d.customers -= static_cast<std::int64_t>(tab.customers.size());
    release_dish_table(tab.dish);
    tab.dish = kNone;
  }

  void attach_table(int r, int t, int dish) {
    Table& tab = restaurants_.at(r).tables.at(t);
    if (!tab.open || tab.dish != kNone) throw ConsistencyError("attaching a table that has a dish");
    if (!dish_live(dish)) throw ConsistencyError("attaching a table to a dead dish");
    Dish& d = dishes_[dish];
    for (int c : tab.customers) d.stats.add(values_[c]);
    d.customers += static_cast<std::int64_t>(tab.customers.size());
    ++d.tables;
    ++total_tables_;
    tab.dish = dish;
  }

  /// Full recount of every counter and sufficient statistic.
  void check_consistency() const {
    std::vector<std::int64_t> rest_customers(restaurants_.size(), 0);
    std::vector<int> dish_tables(dishes_.size(), 0);
    std::vector<std::int64_t> dish_customers(dishes_.size(), 0);
    std::vector<Stats> recount(dishes_.size(), likelihood_.empty());
    std::int64_t tables = 0;
    for (int r = 0; r < static_cast<int>(restaurants_.size()); ++r) {
      const Restaurant& rest = restaurants_[r];
      int open = 0;
      for (int t = 0; t < static_cast<int>(rest.tables.size()); ++t) {
        const Table& tab = rest.tables[t];
        if (!tab.open) {
          if (!tab.customers.empty()) fail("closed table with customers");
          continue;
        }
        ++open;
        if (tab.customers.empty()) fail("open table without customers");
        if (tab.dish == kNone || !dish_live(tab.dish)) fail("open table without a live dish");
        ++dish_tables[tab.dish];
        ++tables;
        for (int s = 0; s < static_cast<int>(tab.customers.size()); ++s) {
          const int c = tab.customers[s];
          if (restaurant_of_[c] != r || table_of_[c] != t || slot_of_[c] != s)
            fail("customer index does not match table membership");
          ++rest_customers[r];
          ++dish_customers[tab.dish];
          recount[tab.dish].add(values_[c]);
        }
      }
      if (open != rest.open_tables) fail("open table counter mismatch");
      if (rest_customers[r] != rest.customers) fail("restaurant customer counter mismatch");
    }
    int live = 0;
    for (int k = 0; k < static_cast<int>(dishes_.size()); ++k) {
      const Dish& d = dishes_[k];
      if (!d.live) {
        if (dish_tables[k] != 0) fail("dead dish still served");
        continue;
      }
      ++live;
      if (d.tables != dish_tables[k] || d.tables < 1) fail("dish table counter mismatch");
      if (d.customers != dish_customers[k]) fail("dish customer counter mismatch");
      if (!(d.stats == recount[k])) fail("dish sufficient statistics differ from recount");
    }
    if (live != live_dishes_) fail("live dish counter mismatch");
    if (tables != total_tables_) fail("total table counter mismatch");
    std::int64_t seated_count = 0;
    for (std::size_t c = 0; c < values_.size(); ++c) seated_count += seated(static_cast<int>(c));
    std::int64_t in_restaurants = 0;
    for (auto n : rest_customers) in_restaurants += n;
    if (seated_count != in_restaurants) fail("seated customers not found at any table");
  }

  /// Sum of per-dish log marginal likelihoods.
  double log_likelihood() const {
    double ll = 0.0;
    for (const Dish& d : dishes_)
      if (d.live) ll += likelihood_.log_marginal(d.stats);
    return ll;
  }

 private:
  [[noreturn]] static void fail(const std::string& what) { throw ConsistencyError(what); }

  void close_table(int r, int t) {
    Restaurant& rest = restaurants_[r];
    Table& tab = rest.tables[t];
    const int dish = tab.dish;
    tab.open = false;
    tab.dish = kNone;
    rest.free_tables.push_back(t);
    --rest.open_tables;
    if (dish != kNone) release_dish_table(dish);
  }

  void release_dish_table(int k) {
    Dish& d = dishes_[k];
    --d.tables;
    --total_tables_;
    if (d.tables == 0) {
      if (d.customers != 0) throw ConsistencyError("dish without tables still has customers");
      d.live = false;
      free_dishes_.push_back(k);
      --live_dishes_;
    }
  }

  L likelihood_;
  std::vector<Value> values_;
  std::vector<int> restaurant_of_;
  std::vector<int> table_of_;
  std::vector<int> slot_of_;
  std::vector<Restaurant> restaurants_;
  std::vector<Dish> dishes_;
  std::vector<int> free_dishes_;
  int live_dishes_ = 0;
  std::int64_t total_tables_ = 0;
};

using SpaceSeating = HdpSeating<SpaceLikelihood>;
using ScalarSeating = HdpSeating<ScalarLikelihood>;

}  // namespace thdp
