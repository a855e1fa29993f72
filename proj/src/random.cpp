// Apache License, Version 2.0, refer to LICENSE.txt

#include "thdp/random.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "thdp/error.hpp"

namespace thdp {

double log_sum_exp(std::span<const double> logw) {
  double mx = -std::numeric_limits<double>::infinity();
  for (double v : logw) mx = std::max(mx, v);
  if (!std::isfinite(mx)) return mx;
  double s = 0.0;
  for (double v : logw) s += std::exp(v - mx);
  return mx + std::log(s);
}

std::vector<double> normalize_log_weights(std::span<const double> logw) {
  const double lse = log_sum_exp(logw);
  if (!std::isfinite(lse)) throw InvalidInput("cannot normalise: all weights are zero");
  std::vector<double> p(logw.size());
  for (std::size_t i = 0; i < logw.size(); ++i) p[i] = std::exp(logw[i] - lse);
  return p;
}

std::size_t sample_categorical(std::span<const double> w, Rng& rng) {
  double total = 0.0;
  for (double v : w) total += v;
  if (!(total > 0.0)) throw InvalidInput("categorical weights sum to zero");
  const double u = uniform01(rng) * total;
  double acc = 0.0;
  std::size_t last = 0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (w[i] <= 0.0) continue;
    acc += w[i];
    last = i;
    if (u < acc) return i;
  }
  return last;
}

std::size_t sample_log_categorical(std::span<const double> logw, Rng& rng) {
  double mx = -std::numeric_limits<double>::infinity();
  for (double v : logw) mx = std::max(mx, v);
  if (!std::isfinite(mx)) throw InvalidInput("categorical log weights are all -inf");
  thread_local std::vector<double> w;
  w.resize(logw.size());
  for (std::size_t i = 0; i < logw.size(); ++i) w[i] = std::exp(logw[i] - mx);
  return sample_categorical(w, rng);
}

double sample_gamma(double shape, double rate, Rng& rng) {
  std::gamma_distribution<double> g(shape, 1.0 / rate);
  const double v = g(rng);
  return std::max(v, std::numeric_limits<double>::min());
}

double sample_beta(double a, double b, Rng& rng) {
  const double x = sample_gamma(a, 1.0, rng);
  const double y = sample_gamma(b, 1.0, rng);
  return x / (x + y);
}

double sample_normal(double mean, double sd, Rng& rng) {
  std::normal_distribution<double> n(mean, sd);
  return n(rng);
}

std::vector<double> sample_dirichlet(std::span<const double> alpha, Rng& rng) {
  std::vector<double> out(alpha.size());
  double total = 0.0;
  for (std::size_t i = 0; i < alpha.size(); ++i) {
    out[i] = alpha[i] > 0.0 ? sample_gamma(alpha[i], 1.0, rng) : 0.0;
    total += out[i];
  }
  if (!(total > 0.0)) throw InvalidInput("Dirichlet parameters are all zero");
  for (double& v : out) v /= total;
  return out;
}

std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k, Rng& rng) {
  k = std::min(n, k);
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(uniform01(rng) * static_cast<double>(n - i));
    std::swap(idx[i], idx[std::min(j, n - 1)]);
  }
  idx.resize(k);
  return idx;
}

}  // namespace thdp
