// Apache License, Version 2.0, refer to LICENSE.txt

#include <cmath>
#include <ostream>
#include <vector>

#include "doctest.h"
#include "thdp/crfl.hpp"
#include "thdp/error.hpp"

using namespace thdp;

namespace {

std::vector<double> probs(const std::vector<double>& logw) { return normalize_log_weights(logw); }

ThdpData toy_data(Rng& rng, int n, int groups, std::uint32_t V, bool flat = false) {
  ThdpData d;
  d.vocabulary = V;
  d.group_count = groups;
  for (int i = 0; i < n; ++i) {
    d.cells.push_back(static_cast<Cell>(rng() % V));
    d.groups.push_back(static_cast<int>(rng() % groups));
    d.times.push_back(flat ? 5.0 : sample_normal(10.0 * (rng() % 3), 1.0, rng));
    d.speeds.push_back(flat ? 1.25 : std::abs(sample_normal(1.0 + (rng() % 2), 0.2, rng)));
  }
  return d;
}

// Space seating shuffled by a few plain CRF sweeps, dependents on one dish.
ThdpSeating scrambled(const ThdpData& d, Rng& rng, int sweeps = 3) {
  ThdpSeating s(d, 0.5, default_nig_prior(d.times), default_nig_prior(d.speeds));
  initialize_one_dish(s.space, d.groups);
  CrfConcentrations c{2.0, 2.0, {}, {}};
  for (int i = 0; i < sweeps; ++i) crf_sweep(s.space, c, rng, false);
  initialize_dependents(s);
  return s;
}

void remove_all(ThdpSeating& s, int obs) {
  s.space.remove_customer(obs);
  s.time.remove_customer(obs);
  s.speed.remove_customer(obs);
}

}  // namespace

TEST_CASE("restaurant preference") {
  SUBCASE("single table, alpha -> 0 gives the dish density") {
    const std::vector<double> times{1.0, 1.0, 1.0, 1.0, 7.0};
    ScalarSeating s(ScalarLikelihood{{0, 1, 1, 1}}, times);
    const int k = s.new_dish();
    const int t = s.open_table(0, k);
    for (int c = 0; c < 4; ++c) s.seat(c, 0, t);
    const CrfConcentrations conc{0.0, 1.0, {}, {}};
    for (double y : {0.5, 1.0, 2.0})
      CHECK(restaurant_log_preference(s, y, 0, conc) ==
            doctest::Approx(log_scalar_predictive(s.dish(k).stats, y)).epsilon(1e-12));
  }
  SUBCASE("brand-new restaurant is the menu mixture") {
    const std::vector<double> times{1.0, 2.0, 9.0};
    ScalarSeating s(ScalarLikelihood{{0, 1, 1, 1}}, times);
    const int a = s.new_dish(), b = s.new_dish();
    s.seat(0, 0, s.open_table(0, a));
    s.seat(1, 0, s.open_table(0, a));
    s.seat(2, 1, s.open_table(1, b));
    const CrfConcentrations conc{0.7, 0.4, {}, {}};
    const double y = 3.0;
    const double ga = scalar_predictive(s.dish(a).stats, y), gb = scalar_predictive(s.dish(b).stats, y);
    const double g0 = scalar_predictive(NigStats(s.likelihood().prior), y);
    const double menu = (2 * ga + 1 * gb + 0.4 * g0) / (3 + 0.4);
    CHECK(std::exp(restaurant_log_preference(s, y, kNone, conc)) == doctest::Approx(menu).epsilon(1e-12));
    CHECK(std::exp(restaurant_log_preference(s, y, 5, conc)) == doctest::Approx(menu).epsilon(1e-12));
  }
  SUBCASE("two tables (3, 1): brute-force enumeration") {
    const std::vector<double> times{0.0, 0.2, -0.1, 4.0, 0.1, 4.2};
    ScalarSeating s(ScalarLikelihood{{1, 1, 1, 1}}, times);
    const int g1 = s.new_dish(), g2 = s.new_dish();
    const int t1 = s.open_table(0, g1);
    for (int c : {0, 1, 2}) s.seat(c, 0, t1);
    s.seat(3, 0, s.open_table(0, g2));
    s.seat(4, 1, s.open_table(1, g1));
    s.seat(5, 1, s.open_table(1, g2));
    const CrfConcentrations conc{1.0, 0.5, {}, {}};
    const double y = 1.5;
    // enumerate (table, dish) outcomes one by one
    double num = 0.0;
    const double p1 = scalar_predictive(s.dish(g1).stats, y), p2 = scalar_predictive(s.dish(g2).stats, y);
    const double p0 = scalar_predictive(NigStats(s.likelihood().prior), y);
    num += 3 * p1;                                  // existing table 1
    num += 1 * p2;                                  // existing table 2
    const double h = 4, h1 = 2, h2 = 2;             // global table counts
    num += conc.alpha * (h1 / (h + conc.gamma)) * p1;
    num += conc.alpha * (h2 / (h + conc.gamma)) * p2;
    num += conc.alpha * (conc.gamma / (h + conc.gamma)) * p0;
    const double expect = num / (4 + conc.alpha);
    CHECK(std::exp(restaurant_log_preference(s, y, 0, conc)) == doctest::Approx(expect).epsilon(1e-12));
  }
}

TEST_CASE("reduction: flat time and speed give the single-HDP weights") {
  for (int rep = 0; rep < 30; ++rep) {
    Rng rng(300 + rep);
    const auto d = toy_data(rng, 20 + static_cast<int>(rng() % 40), 1 + static_cast<int>(rng() % 4),
                               3 + rng() % 10, true);
    ThdpSeating s = scrambled(d, rng);
    HyperParams h = HyperParams::with_defaults(0.5);
    h.space.alpha = 0.3 + uniform01(rng);
    h.space.gamma = 0.3 + uniform01(rng);
    h.time.gamma = 0.0;
    h.speed.gamma = 0.0;
    h.time.alpha = 0.2 + uniform01(rng);
    h.speed.alpha = 0.2 + uniform01(rng);
    const int obs = static_cast<int>(rng() % d.size());
    const int j = s.space.restaurant_of(obs);
    remove_all(s, obs);

    SpaceWeights w;
    space_table_log_weights(s, obs, j, h, w);
    TableWeights single;
    table_log_weights(s.space, j, d.cells[obs], h.space.alpha, h.space.gamma, single);
    REQUIRE(w.tables.tables == single.tables);
    const auto a = probs(w.tables.log_weights), b = probs(single.log_weights);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::abs(a[i] - b[i]) < 1e-12);

    DishWeights dsingle;
    dish_log_weights(s.space, d.cells[obs], h.space.gamma, dsingle);
    const auto c = probs(w.dishes.log_weights), e = probs(dsingle.log_weights);
    for (std::size_t i = 0; i < c.size(); ++i) CHECK(std::abs(c[i] - e[i]) < 1e-12);
  }
}

TEST_CASE("space table weights follow time profiles") {
  // two dishes with the same cells, time peaks at 0 and `sep`
  double last = 0.0;
  for (double sep : {1.0, 2.0, 6.0, 20.0}) {
    ThdpData d;
    d.vocabulary = 4;
    for (int i = 0; i < 20; ++i) {
      d.cells.push_back(static_cast<Cell>(i % 2));
      d.groups.push_back(0);
      d.times.push_back(i < 10 ? 0.1 * (i % 3) : sep + 0.1 * (i % 3));
      d.speeds.push_back(1.0);
    }
    d.cells.push_back(0);
    d.groups.push_back(0);
    d.times.push_back(0.05);
    d.speeds.push_back(1.0);
    ThdpSeating s(d, 0.5, {0, 0.01, 2, 0.1}, {1, 1, 2, 0.1});
    const int A = s.space.new_dish(), B = s.space.new_dish();
    const int tA = s.space.open_table(0, A), tB = s.space.open_table(0, B);
    for (int i = 0; i < 20; ++i) s.space.seat(i, 0, i < 10 ? tA : tB);
    s.space.seat(20, 0, tA);
    // time restaurants A and B each eat their own time dish
    const int T1 = s.time.new_dish(), T2 = s.time.new_dish();
    const int oA = s.time.open_table(A, T1), oB = s.time.open_table(B, T2);
    const int S = s.speed.new_dish();
    const int pA = s.speed.open_table(A, S), pB = s.speed.open_table(B, S);
    for (int i = 0; i <= 20; ++i) {
      const bool a = i < 10 || i == 20;
      s.time.seat(i, a ? A : B, a ? oA : oB);
      s.speed.seat(i, a ? A : B, a ? pA : pB);
    }
    s.check_consistency();
    remove_all(s, 20);
    HyperParams h = HyperParams::with_defaults(0.1);
    SpaceWeights w;
    auto p_a = [&] {
      space_table_log_weights(s, 20, 0, h, w);
      const auto p = probs(w.tables.log_weights);
      return w.tables.tables[0] == tA ? p[0] : p[1];
    };
    const double pa = p_a();
    CHECK(pa >= last);
    last = pa;
    if (sep >= 6.0) CHECK(pa > 0.99);
    // B keeps an alpha_t share of the global menu and a new table keeps an
    // alpha_s share, so the limit is 1 - O(alpha)
    h.time.alpha = 1e-9;
    h.space.alpha = 1e-9;
    if (sep >= 20.0) CHECK(p_a() > 1 - 1e-6);

    HyperParams h0 = h;
    h0.space.alpha = 0.0;
    space_table_log_weights(s, 20, 0, h0, w);
    CHECK(probs(w.tables.log_weights).back() == 0.0);
  }
}

TEST_CASE("new-table dish weights are the triple product") {
  Rng rng(8);
  const auto d = toy_data(rng, 40, 3, 6);
  ThdpSeating s = scrambled(d, rng, 5);
  HyperParams h = HyperParams::with_defaults(0.8);
  for (int i = 0; i < 3; ++i) crfl_sweep(s, h, rng, false);
  const int obs = 7;
  const int j = s.space.restaurant_of(obs);
  remove_all(s, obs);
  SpaceWeights w;
  space_table_log_weights(s, obs, j, h, w);
  for (std::size_t i = 0; i < w.dishes.dishes.size(); ++i) {
    const int k = w.dishes.dishes[i];
    const double expect = std::log(static_cast<double>(s.space.dish(k).tables)) +
                          log_space_predictive(s.space.dish(k).stats, d.cells[obs]) +
                          restaurant_log_preference(s.time, d.times[obs], k, h.time) +
                          restaurant_log_preference(s.speed, d.speeds[obs], k, h.speed);
    CHECK(w.dishes.log_weights[i] == doctest::Approx(expect).epsilon(1e-12));
  }
  const double fresh = std::log(h.space.gamma) - std::log(6.0) +
                       restaurant_log_preference(s.time, d.times[obs], kNone, h.time) +
                       restaurant_log_preference(s.speed, d.speeds[obs], kNone, h.speed);
  CHECK(w.dishes.log_weights.back() == doctest::Approx(fresh).epsilon(1e-12));

  // the toy numbers: f = (0.3, 0.1), time preference (0.5, 0.01), m = (1, 1), gamma = 0
  const auto q = probs({std::log(0.3 * 0.5), std::log(0.1 * 0.01)});
  CHECK(q[0] == doctest::Approx(0.15 / 0.151).epsilon(1e-12));
  CHECK(q[0] == doctest::Approx(0.9934).epsilon(1e-4));
}

TEST_CASE("table-level dish weights") {
  Rng rng(12);
  const auto d = toy_data(rng, 50, 3, 5);
  ThdpSeating s = scrambled(d, rng, 4);
  HyperParams h = HyperParams::with_defaults(0.9);
  for (int i = 0; i < 3; ++i) crfl_sweep(s, h, rng, false);

  auto detach = [&](int r, int t) {
    const auto members = s.space.table(r, t).customers;
    s.space.detach_table(r, t);
    for (int c : members) {
      s.time.remove_customer(c);
      s.speed.remove_customer(c);
    }
    return members;
  };

  SUBCASE("single-customer table equals the new-table dish distribution") {
    // a one-customer table: move customer 0 to a fresh table on its own dish
    const int k = s.space.dish_of(0);
    const int r = s.space.restaurant_of(0);
    remove_all(s, 0);
    s.space.ensure_restaurant(r);
    const int kk = s.space.dish_live(k) ? k : s.space.new_dish();
    const int t = s.space.open_table(r, kk);
    s.space.seat(0, r, t);
    reseat_dependents(s, std::vector<int>{0}, kNone, kk, h, rng);
    s.check_consistency();

    detach(r, t);
    DishWeights tw;
    table_space_dish_log_weights(s, r, t, h, rng, tw);
    // the same state seen from the customer-level move
    SpaceWeights cw;
    space_table_log_weights(s, 0, r, h, cw);
    REQUIRE(tw.dishes == cw.dishes.dishes);
    const auto a = probs(tw.log_weights), b = probs(cw.dishes.log_weights);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::abs(a[i] - b[i]) < 1e-12);
  }
  SUBCASE("customer_selection >= table size uses the exact product") {
    int r = -1, t = -1;
    for (int j = 0; j < static_cast<int>(s.space.restaurant_slots()) && r < 0; ++j)
      for (int tt : s.space.open_tables(j))
        if (s.space.table(j, tt).customers.size() >= 3) {
          r = j;
          t = tt;
          break;
        }
    REQUIRE(r >= 0);
    const auto members = detach(r, t);
    h.customer_selection = static_cast<int>(members.size());
    DishWeights w;
    Rng probe(1);
    const auto before = probe;
    table_space_dish_log_weights(s, r, t, h, probe, w);
    CHECK(probe == before);  // nothing drawn when every customer is used
    std::vector<Cell> cells;
    for (int c : members) cells.push_back(d.cells[c]);
    const auto batch = make_cell_batch(cells);
    for (std::size_t i = 0; i < w.dishes.size(); ++i) {
      const int k = w.dishes[i];
      double expect = std::log(static_cast<double>(s.space.dish(k).tables)) +
                      log_space_joint_predictive(s.space.dish(k).stats, batch);
      for (int c : members)
        expect += restaurant_log_preference(s.time, d.times[c], k, h.time) +
                  restaurant_log_preference(s.speed, d.speeds[c], k, h.speed);
      CHECK(w.log_weights[i] == doctest::Approx(expect).epsilon(1e-12));
    }
    double fresh = std::log(h.space.gamma) + log_space_joint_prior_predictive(5, 0.5, batch);
    for (int c : members)
      fresh += restaurant_log_preference(s.time, d.times[c], kNone, h.time) +
               restaurant_log_preference(s.speed, d.speeds[c], kNone, h.speed);
    CHECK(w.log_weights.back() == doctest::Approx(fresh).epsilon(1e-12));

    // a smaller selection draws a subsample and only sums over it
    h.customer_selection = 1;
    DishWeights w1;
    table_space_dish_log_weights(s, r, t, h, probe, w1);
    CHECK_FALSE(probe == before);
  }
}

TEST_CASE("reseat dependents") {
  Rng rng(31);
  const auto d = toy_data(rng, 40, 2, 4);
  ThdpSeating s = scrambled(d, rng, 0);  // one space dish for everyone
  HyperParams h = HyperParams::with_defaults(0.5);
  const int k = s.space.dish_of(0);

  SUBCASE("same dish is a no-op") {
    const auto before_tables = s.time.total_tables();
    std::vector<int> obs{0, 1, 2};
    reseat_dependents(s, obs, k, k, h, rng);
    CHECK(s.time.total_tables() == before_tables);
    s.check_consistency();
  }
  SUBCASE("moving five observations keeps the customer count and empties nothing wrongly") {
    // move five observations of restaurant 0 onto a new space table with a new dish
    std::vector<int> moved;
    for (int c = 0; c < static_cast<int>(d.size()) && moved.size() < 5; ++c)
      if (d.groups[c] == 0) moved.push_back(c);
    const int k2 = s.space.new_dish();
    const int t = s.space.open_table(0, k2);
    for (int c : moved) {
      s.space.remove_customer(c);
      s.space.seat(c, 0, t);
    }
    reseat_dependents(s, moved, k, k2, h, rng);
    s.check_consistency();
    std::int64_t total = 0;
    for (auto n : s.time.restaurant_customer_counts()) total += n;
    CHECK(total == static_cast<std::int64_t>(d.size()));
    CHECK(s.time.restaurant(k2).customers == 5);

    // the last five leave dish k2: its time and speed restaurants empty out
    const int t0 = s.space.table_of(0) == t ? s.space.open_tables(0).front() : s.space.table_of(0);
    (void)t0;
    for (int c : moved) {
      s.space.remove_customer(c);
      const int tt = s.space.open_tables(0).front();
      s.space.seat(c, 0, tt);
    }
    CHECK_FALSE(s.space.dish_live(k2));
    reseat_dependents(s, moved, k2, k, h, rng);
    CHECK(s.time.restaurant(k2).customers == 0);
    CHECK(s.speed.restaurant(k2).customers == 0);
    s.check_consistency();
  }
  SUBCASE("dangling links are reported") {
    const int k2 = s.space.new_dish();
    const int t = s.space.open_table(1, k2);
    int c = 0;
    while (d.groups[c] != 1) ++c;
    s.space.remove_customer(c);
    s.space.seat(c, 1, t);
    CHECK_THROWS_AS(s.check_consistency(), ConsistencyError);
    CHECK_THROWS_AS(reseat_dependents(s, std::vector<int>{c}, k2 + 7, k2, h, rng), ConsistencyError);
  }
}

TEST_CASE("crfl sweeps keep every invariant on random inputs") {
  for (int rep = 0; rep < 100; ++rep) {
    Rng rng(7000 + rep);
    const auto d = toy_data(rng, 1 + static_cast<int>(rng() % 50), 1 + static_cast<int>(rng() % 4),
                               2 + rng() % 12);
    ThdpSeating s = scrambled(d, rng, static_cast<int>(rng() % 3));
    HyperParams h = HyperParams::with_defaults(0.1 + 2 * uniform01(rng));
    h.customer_selection = 1 + static_cast<int>(rng() % 4);
    for (int sweep = 0; sweep < 4; ++sweep) {
      crfl_sweep(s, h, rng);
      s.check_consistency();
      for (ScalarSeating* dep : {&s.time, &s.speed}) {
        int restaurants = 0;
        for (auto n : dep->restaurant_customer_counts()) restaurants += n > 0;
        CHECK(restaurants == s.space.live_dish_count());
      }
    }
  }
}

TEST_CASE("single observation") {
  ThdpData d;
  d.vocabulary = 5;
  d.cells = {3};
  d.groups = {0};
  d.times = {2.0};
  d.speeds = {1.0};
  Rng rng(1);
  ThdpSeating s = scrambled(d, rng, 1);
  HyperParams h = HyperParams::with_defaults();
  for (int i = 0; i < 5; ++i) crfl_sweep(s, h, rng);
  CHECK(s.space.live_dish_count() == 1);
  CHECK(s.time.live_dish_count() == 1);
  CHECK(s.speed.live_dish_count() == 1);
  s.check_consistency();
}

TEST_CASE("fit is reproducible and rejects empty data") {
  Rng g(4);
  const auto d = toy_data(g, 60, 3, 8);
  const Codebook cb = build_codebook(1, 1, {0, 0, 1, 1}, 0.1);
  Codebook cb8 = cb;
  FitConfig cfg;
  cfg.burn_in = 10;
  cfg.max_iters = 10;
  ThdpData d8 = d;
  d8.vocabulary = cb.vocabulary();
  for (auto& c : d8.cells) c %= cb.vocabulary();
  Rng r1(5), r2(5);
  const auto a = fit(d8, cb8, cfg, r1);
  const auto b = fit(d8, cb8, cfg, r2);
  CHECK(a.posterior == b.posterior);
  CHECK(a.dish_trace == b.dish_trace);
  validate_posterior(a.posterior);

  ThdpData empty;
  Rng r3(1);
  CHECK_THROWS_AS(fit(empty, cb, cfg, r3), InvalidInput);
}

TEST_CASE("concentrations from the prior without data") {
  ThdpData d;
  d.vocabulary = 5;
  ThdpSeating s(d, 0.5, {}, {});
  HyperParams h = HyperParams::with_defaults(0.1, {3.0, 2.0});
  Rng rng(2);
  double sum[6] = {};
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    sample_hyperparameters(s, h, rng);
    const double v[6] = {h.space.alpha, h.space.gamma, h.time.alpha, h.time.gamma, h.speed.alpha, h.speed.gamma};
    for (int j = 0; j < 6; ++j) {
      CHECK(v[j] > 0.0);
      sum[j] += v[j];
    }
  }
  for (double x : sum) CHECK(x / n == doctest::Approx(1.5).epsilon(0.03));
}
