// Apache License, Version 2.0, refer to LICENSE.txt

#include "thdp/crfl.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "thdp/error.hpp"

namespace thdp {

ThdpData make_thdp_data(const std::vector<Trajectory>& trajs, const Codebook& cb) {
  ThdpData d;
  d.vocabulary = cb.vocabulary();
  int max_group = 0;
  for (const auto& tr : trajs)
    for (const auto& o : tr.observations) {
      if (o.cell >= d.vocabulary) throw InvalidInput("observation cell outside the codebook");
      if (o.group < 0) throw InvalidInput("negative group id");
      d.cells.push_back(o.cell);
      d.times.push_back(o.time);
      d.speeds.push_back(o.speed);
      d.groups.push_back(o.group);
      max_group = std::max(max_group, o.group);
    }
  d.group_count = max_group + 1;
  return d;
}

HyperParams HyperParams::with_defaults(double initial, GammaPrior prior) {
  HyperParams h;
  for (CrfConcentrations* c : {&h.space, &h.time, &h.speed}) *c = {initial, initial, prior, prior};
  return h;
}

ThdpSeating::ThdpSeating(const ThdpData& data, double eta, const NigPrior& time_prior,
                         const NigPrior& speed_prior)
    : space(SpaceLikelihood{data.vocabulary, eta}, data.cells),
      time(ScalarLikelihood{time_prior}, data.times),
      speed(ScalarLikelihood{speed_prior}, data.speeds) {
  if (data.times.size() != data.cells.size() || data.speeds.size() != data.cells.size())
    throw InvalidInput("observation columns differ in length");
}

void ThdpSeating::check_consistency() const {
  space.check_consistency();
  time.check_consistency();
  speed.check_consistency();
  for (int c = 0; c < static_cast<int>(space.customer_count()); ++c) {
    const int k = space.dish_of(c);
    if (time.restaurant_of(c) != k || speed.restaurant_of(c) != k)
      throw ConsistencyError("time/speed restaurant differs from the space dish");
  }
  for (ScalarSeating const* s : {&time, &speed})
    for (int r = 0; r < static_cast<int>(s->restaurant_slots()); ++r) {
      const auto n = s->restaurant(r).customers;
      if (n == 0) continue;
      if (!space.dish_live(r) || space.dish(r).customers != n)
        throw ConsistencyError("restaurant without a matching space dish");
    }
}

void restaurant_log_preferences(const ScalarSeating& s, double value, const CrfConcentrations& conc,
                                RestaurantPreferences& out) {
  thread_local std::vector<double> g;
  thread_local std::vector<double> terms;
  const double g_new = detail::dish_log_likelihoods(s, value, g);
  const double menu = detail::new_table_mixture(s, g, g_new, conc.gamma);
  const double log_alpha = detail::safe_log(conc.alpha);
  out.fresh = menu;
  out.by_restaurant.assign(s.restaurant_slots(), menu);
  for (int r = 0; r < static_cast<int>(s.restaurant_slots()); ++r) {
    const auto& rest = s.restaurant(r);
    if (rest.customers == 0) continue;
    terms.clear();
    for (const auto& tab : rest.tables)
      if (tab.open) terms.push_back(std::log(static_cast<double>(tab.customers.size())) + g[tab.dish]);
    terms.push_back(log_alpha + menu);
    out.by_restaurant[r] = log_sum_exp(terms) - std::log(static_cast<double>(rest.customers) + conc.alpha);
  }
}

double restaurant_log_preference(const ScalarSeating& s, double value, int restaurant,
                                 const CrfConcentrations& conc) {
  RestaurantPreferences p;
  restaurant_log_preferences(s, value, conc, p);
  return p.at(restaurant);
}

void space_table_log_weights(const ThdpSeating& s, int obs, int restaurant, const HyperParams& h,
                             SpaceWeights& out) {
  thread_local std::vector<double> f;
  thread_local RestaurantPreferences pt;
  thread_local RestaurantPreferences ps;
  const double f_new = detail::dish_log_likelihoods(s.space, s.space.value(obs), f);
  restaurant_log_preferences(s.time, s.time.value(obs), h.time, pt);
  restaurant_log_preferences(s.speed, s.speed.value(obs), h.speed, ps);

  auto& dishes = out.dishes;
  dishes.dishes.clear();
  dishes.log_weights.clear();
  for (int k = 0; k < static_cast<int>(s.space.dish_slots()); ++k) {
    if (!s.space.dish(k).live) continue;
    dishes.dishes.push_back(k);
    dishes.log_weights.push_back(std::log(static_cast<double>(s.space.dish(k).tables)) + f[k] +
                                 pt.at(k) + ps.at(k));
  }
  dishes.log_weights.push_back(detail::safe_log(h.space.gamma) + f_new + pt.fresh + ps.fresh);

  auto& tables = out.tables;
  tables.tables = s.space.open_tables(restaurant);
  tables.log_weights.clear();
  for (int t : tables.tables) {
    const auto& tab = s.space.table(restaurant, t);
    const int k = tab.dish;
    tables.log_weights.push_back(std::log(static_cast<double>(tab.customers.size())) + f[k] +
                                 pt.at(k) + ps.at(k));
  }
  const double denom = static_cast<double>(s.space.total_tables()) + h.space.gamma;
  const double mix = denom > 0.0 ? log_sum_exp(dishes.log_weights) - std::log(denom)
                                 : dishes.log_weights.back();
  tables.log_weights.push_back(detail::safe_log(h.space.alpha) + mix);
}

int sample_space_table(const ThdpSeating& s, int obs, int restaurant, const HyperParams& h, Rng& rng) {
  SpaceWeights w;
  space_table_log_weights(s, obs, restaurant, h, w);
  const std::size_t i = sample_log_categorical(w.tables.log_weights, rng);
  return i < w.tables.tables.size() ? w.tables.tables[i] : kNone;
}

int sample_space_dish_for_new_table(const ThdpSeating& s, int obs, const HyperParams& h, Rng& rng) {
  SpaceWeights w;
  space_table_log_weights(s, obs, 0, h, w);
  const std::size_t i = sample_log_categorical(w.dishes.log_weights, rng);
  return i < w.dishes.dishes.size() ? w.dishes.dishes[i] : kNone;
}

void table_space_dish_log_weights(const ThdpSeating& s, int restaurant, int table,
                                  const HyperParams& h, Rng& rng, DishWeights& out) {
  const auto& tab = s.space.table(restaurant, table);
  if (!tab.open || tab.dish != kNone) throw ConsistencyError("table must be detached first");
  const auto& members = tab.customers;

  std::vector<Cell> cells;
  cells.reserve(members.size());
  for (int c : members) {
    if (s.time.seated(c) || s.speed.seated(c))
      throw ConsistencyError("linked customers must be removed first");
    cells.push_back(s.space.value(c));
  }
  table_dish_log_weights(s.space, s.space.likelihood().batch(cells), h.space.gamma, out);

  std::vector<int> chosen;
  const std::size_t n = members.size();
  const std::size_t want = static_cast<std::size_t>(std::max(1, h.customer_selection));
  if (want >= n) {
    chosen = members;
  } else {
    for (std::size_t i : sample_without_replacement(n, want, rng)) chosen.push_back(members[i]);
  }

  RestaurantPreferences pt;
  RestaurantPreferences ps;
  const std::size_t K = out.dishes.size();
  for (int c : chosen) {
    restaurant_log_preferences(s.time, s.time.value(c), h.time, pt);
    restaurant_log_preferences(s.speed, s.speed.value(c), h.speed, ps);
    for (std::size_t i = 0; i < K; ++i)
      out.log_weights[i] += pt.at(out.dishes[i]) + ps.at(out.dishes[i]);
    out.log_weights[K] += pt.fresh + ps.fresh;
  }
}

void reseat_dependents(ThdpSeating& s, std::span<const int> observations, int old_dish,
                       int new_dish, const HyperParams& h, Rng& rng) {
  if (!s.space.dish_live(new_dish)) throw ConsistencyError("reseating into a dead space dish");
  for (int c : observations) {
    if (s.space.dish_of(c) != new_dish)
      throw ConsistencyError("space customer is not on the target dish");
    for (ScalarSeating* dep : {&s.time, &s.speed}) {
      const CrfConcentrations& conc = dep == &s.time ? h.time : h.speed;
      if (dep->seated(c)) {
        const int r = dep->restaurant_of(c);
        if (r == new_dish) continue;
        if (r != old_dish) throw ConsistencyError("dangling link: customer in an unrelated restaurant");
        dep->remove_customer(c);
      }
      seat_customer(*dep, c, new_dish, conc.alpha, conc.gamma, rng);
    }
  }
}

void crfl_customer_step(ThdpSeating& s, int obs, const HyperParams& h, Rng& rng) {
  const int j = s.space.restaurant_of(obs);
  if (j == kNone) throw ConsistencyError("observation is not seated");
  s.space.remove_customer(obs);
  s.time.remove_customer(obs);
  s.speed.remove_customer(obs);

  thread_local SpaceWeights w;
  space_table_log_weights(s, obs, j, h, w);
  const std::size_t i = sample_log_categorical(w.tables.log_weights, rng);
  int dish;
  if (i < w.tables.tables.size()) {
    const int t = w.tables.tables[i];
    dish = s.space.table(j, t).dish;
    s.space.seat(obs, j, t);
  } else {
    const std::size_t d = sample_log_categorical(w.dishes.log_weights, rng);
    dish = d < w.dishes.dishes.size() ? w.dishes.dishes[d] : s.space.new_dish();
    s.space.seat(obs, j, s.space.open_table(j, dish));
  }
  seat_customer(s.time, obs, dish, h.time.alpha, h.time.gamma, rng);
  seat_customer(s.speed, obs, dish, h.speed.alpha, h.speed.gamma, rng);
}

int sample_table_space_dish(ThdpSeating& s, int restaurant, int table, const HyperParams& h, Rng& rng) {
  const std::vector<int> members = s.space.table(restaurant, table).customers;
  const int old_dish = s.space.table(restaurant, table).dish;
  s.space.detach_table(restaurant, table);
  for (int c : members) {
    if (s.time.restaurant_of(c) != old_dish || s.speed.restaurant_of(c) != old_dish)
      throw ConsistencyError("dangling link before a table move");
    s.time.remove_customer(c);
    s.speed.remove_customer(c);
  }
  DishWeights w;
  table_space_dish_log_weights(s, restaurant, table, h, rng, w);
  const std::size_t i = sample_log_categorical(w.log_weights, rng);
  const int dish = i < w.dishes.size() ? w.dishes[i] : s.space.new_dish();
  s.space.attach_table(restaurant, table, dish);
  reseat_dependents(s, members, old_dish, dish, h, rng);
  return dish;
}

void sample_hyperparameters(const ThdpSeating& s, HyperParams& h, Rng& rng) {
  resample_concentrations(s.space, h.space, rng);
  resample_concentrations(s.time, h.time, rng);
  resample_concentrations(s.speed, h.speed, rng);
}

void crfl_sweep(ThdpSeating& s, HyperParams& h, Rng& rng, bool resample) {
  crf_sweep(s.time, h.time, rng, false);
  crf_sweep(s.speed, h.speed, rng, false);

  std::vector<std::vector<int>> buckets(s.space.restaurant_slots());
  for (int c = 0; c < static_cast<int>(s.space.customer_count()); ++c)
    if (s.space.seated(c)) buckets[s.space.restaurant_of(c)].push_back(c);
  for (int j = 0; j < static_cast<int>(buckets.size()); ++j) {
    if (buckets[j].empty()) continue;
    for (int c : buckets[j]) crfl_customer_step(s, c, h, rng);
    for (int t : s.space.open_tables(j)) sample_table_space_dish(s, j, t, h, rng);
  }
  if (resample) sample_hyperparameters(s, h, rng);
}

void initialize_dependents(ThdpSeating& s) {
  std::vector<int> rest(s.space.customer_count());
  for (int c = 0; c < static_cast<int>(rest.size()); ++c) {
    rest[c] = s.space.dish_of(c);
    if (rest[c] == kNone) throw ConsistencyError("space customer unseated at initialisation");
  }
  initialize_one_dish(s.time, rest);
  initialize_one_dish(s.speed, rest);
}

namespace {

GaussianMode mode_params(const NigStats& stats, bool draw, Rng& rng) {
  const auto post = stats.posterior();
  if (draw) {
    const double var = 1.0 / sample_gamma(post.a, post.b, rng);
    return {sample_normal(post.mu, std::sqrt(var / post.kappa), rng), var};
  }
  const double var = post.a > 1.0 ? post.b / (post.a - 1.0) : post.b / post.a;
  return {post.mu, var};
}

CellDistribution cell_params(const DirMultStats& stats, bool draw, Rng& rng) {
  CellDistribution d;
  d.vocabulary = stats.vocabulary();
  const double V = static_cast<double>(d.vocabulary);
  if (draw) {
    std::vector<double> a(d.vocabulary);
    for (Cell c = 0; c < d.vocabulary; ++c) a[c] = stats.count(c) + stats.eta();
    const auto w = sample_dirichlet(a, rng);
    for (Cell c = 0; c < d.vocabulary; ++c) d.entries.emplace_back(c, w[c]);
    d.background = 0.0;
    return d;
  }
  const double denom = static_cast<double>(stats.total()) + V * stats.eta();
  for (Cell c = 0; c < d.vocabulary; ++c)
    if (stats.count(c) > 0) d.entries.emplace_back(c, (stats.count(c) + stats.eta()) / denom);
  d.background = stats.eta() / denom;
  return d;
}

struct Menu {
  std::vector<int> dishes;
  std::vector<double> weights;
  std::vector<GaussianMode> modes;
};

Menu extract_menu(const ScalarSeating& s, double gamma, const ExtractOptions& opts, Rng& rng) {
  Menu m;
  const auto hw = extract_hdp_weights(s, gamma, rng, opts.draw_weights);
  m.dishes = hw.dishes;
  const double kept = 1.0 - hw.new_weight;
  for (std::size_t i = 0; i < hw.dishes.size(); ++i) {
    m.weights.push_back(hw.weights[i] / kept);
    m.modes.push_back(mode_params(s.dish(hw.dishes[i]).stats, opts.draw_params, rng));
  }
  return m;
}

// w_kl proportional to n_kl + alpha * zeta_l over the menu's dishes.
std::vector<double> restaurant_profile(const ScalarSeating& s, int r, const Menu& menu, double alpha) {
  std::vector<double> w(menu.dishes.size(), 0.0);
  if (menu.dishes.empty()) return w;
  std::vector<int> pos(s.dish_slots(), -1);
  for (std::size_t i = 0; i < menu.dishes.size(); ++i) pos[menu.dishes[i]] = static_cast<int>(i);
  if (r < static_cast<int>(s.restaurant_slots()))
    for (const auto& tab : s.restaurant(r).tables)
      if (tab.open) w[pos[tab.dish]] += static_cast<double>(tab.customers.size());
  double total = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    w[i] += alpha * menu.weights[i];
    total += w[i];
  }
  if (total <= 0.0) return menu.weights;
  for (double& v : w) v /= total;
  return w;
}

ThdpPosterior extract_space(const SpaceSeating& space, const CrfConcentrations& conc,
                            const Codebook& cb, const ExtractOptions& opts, Rng& rng,
                            std::vector<int>& dish_of_flow) {
  ThdpPosterior p;
  p.codebook = cb;
  const auto hw = extract_hdp_weights(space, conc.gamma, rng, opts.draw_weights);
  p.unseen_weight = hw.new_weight;
  const double kept = 1.0 - hw.new_weight;
  std::vector<std::size_t> order(hw.dishes.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return hw.weights[a] > hw.weights[b]; });
  dish_of_flow.clear();
  for (std::size_t i : order) {
    Flow f;
    f.weight = hw.weights[i] / kept;
    f.cells = cell_params(space.dish(hw.dishes[i]).stats, opts.draw_params, rng);
    p.flows.push_back(std::move(f));
    dish_of_flow.push_back(hw.dishes[i]);
  }
  return p;
}

}  // namespace

ThdpPosterior extract_posterior(const ThdpSeating& s, const HyperParams& h, const Codebook& cb,
                                const ExtractOptions& opts, Rng& rng) {
  if (cb.vocabulary() != s.space.likelihood().vocabulary)
    throw InvalidInput("codebook does not match the seating");
  std::vector<int> dish_of_flow;
  ThdpPosterior p = extract_space(s.space, h.space, cb, opts, rng, dish_of_flow);
  const Menu tm = extract_menu(s.time, h.time.gamma, opts, rng);
  const Menu sm = extract_menu(s.speed, h.speed.gamma, opts, rng);
  p.time_modes = tm.modes;
  p.time_mode_weights = tm.weights;
  p.speed_modes = sm.modes;
  p.speed_mode_weights = sm.weights;
  for (std::size_t f = 0; f < p.flows.size(); ++f) {
    p.flows[f].time_weights = restaurant_profile(s.time, dish_of_flow[f], tm, h.time.alpha);
    p.flows[f].speed_weights = restaurant_profile(s.speed, dish_of_flow[f], sm, h.speed.alpha);
  }
  return p;
}

namespace {

void require_data(const ThdpData& data) {
  if (data.size() == 0) throw InvalidInput("no observations to fit");
  if (data.groups.size() != data.size()) throw InvalidInput("group column length mismatch");
}

}  // namespace

FitResult fit(const ThdpData& data, const Codebook& cb, const FitConfig& cfg, Rng& rng) {
  require_data(data);
  if (cfg.burn_in < 0 || cfg.max_iters < 0) throw InvalidInput("negative sweep count");
  FitResult res;
  res.hypers = cfg.hypers;
  ThdpSeating s(data, cfg.eta, cfg.time_prior.value_or(default_nig_prior(data.times)),
                cfg.speed_prior.value_or(default_nig_prior(data.speeds)));
  initialize_one_dish(s.space, data.groups);
  for (int it = 0; it < cfg.burn_in; ++it) {
    crf_sweep(s.space, res.hypers.space, rng, true);
    if (cfg.check_every_sweep) s.space.check_consistency();
  }
  initialize_dependents(s);

  int stable_since = 0;
  double window_ll = 0.0;
  for (int it = 0; it < cfg.max_iters; ++it) {
    crfl_sweep(s, res.hypers, rng, true);
    if (cfg.check_every_sweep) s.check_consistency();
    ++res.sweeps;
    const int K = s.space.live_dish_count();
    res.dish_trace.push_back(K);
    if (!cfg.early_stop) continue;
    const double ll = s.space.log_likelihood() + s.time.log_likelihood() + s.speed.log_likelihood();
    if (it == 0 || K != res.dish_trace[res.dish_trace.size() - 2] ||
        std::abs(ll - window_ll) > cfg.stability_tolerance * std::abs(window_ll)) {
      stable_since = it;
      window_ll = ll;
    }
    if (it - stable_since >= cfg.stability_window) break;
  }
  s.check_consistency();
  res.posterior = extract_posterior(s, res.hypers, cb, cfg.extract, rng);
  return res;
}

FitResult fit_space_only(const ThdpData& data, const Codebook& cb, const FitConfig& cfg, Rng& rng) {
  require_data(data);
  if (cb.vocabulary() != data.vocabulary) throw InvalidInput("codebook does not match the data");
  FitResult res;
  res.hypers = cfg.hypers;
  SpaceSeating space(SpaceLikelihood{data.vocabulary, cfg.eta}, data.cells);
  initialize_one_dish(space, data.groups);
  const int total = cfg.burn_in + cfg.max_iters;
  for (int it = 0; it < total; ++it) {
    crf_sweep(space, res.hypers.space, rng, true);
    if (cfg.check_every_sweep) space.check_consistency();
    ++res.sweeps;
    res.dish_trace.push_back(space.live_dish_count());
  }
  space.check_consistency();
  std::vector<int> dish_of_flow;
  res.posterior = extract_space(space, res.hypers.space, cb, cfg.extract, rng, dish_of_flow);
  return res;
}

}  // namespace thdp
