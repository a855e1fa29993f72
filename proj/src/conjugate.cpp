// Apache License, Version 2.0, refer to LICENSE.txt

#include "thdp/conjugate.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "thdp/error.hpp"

namespace thdp {

namespace {

constexpr double kQuantum = 1048576.0;  // 2^20

std::int64_t quantize(double v) { return std::llround(v * kQuantum); }

}  // namespace

DirMultStats::DirMultStats(std::uint32_t vocabulary, double eta)
    : counts_(vocabulary, 0), eta_(eta) {
  if (vocabulary == 0) throw InvalidInput("Dirichlet-Multinomial needs a non-empty vocabulary");
  if (!(eta > 0.0)) throw InvalidInput("Dirichlet concentration must be > 0");
}

void DirMultStats::add(Cell c) {
  ++counts_[c];
  ++total_;
}

void DirMultStats::remove(Cell c) {
  if (counts_[c] <= 0) throw ConsistencyError("removing a cell that was never added");
  --counts_[c];
  --total_;
}

double space_predictive(const DirMultStats& s, Cell cell) {
  return (s.count(cell) + s.eta()) / (static_cast<double>(s.total()) + s.vocabulary() * s.eta());
}

double log_space_predictive(const DirMultStats& s, Cell cell) {
  return std::log(s.count(cell) + s.eta()) -
         std::log(static_cast<double>(s.total()) + s.vocabulary() * s.eta());
}

CellBatch make_cell_batch(std::span<const Cell> cells) {
  std::vector<Cell> sorted(cells.begin(), cells.end());
  std::sort(sorted.begin(), sorted.end());
  CellBatch b;
  b.size = static_cast<std::int64_t>(sorted.size());
  for (std::size_t i = 0; i < sorted.size();) {
    std::size_t j = i;
    while (j < sorted.size() && sorted[j] == sorted[i]) ++j;
    b.runs.emplace_back(sorted[i], static_cast<std::int32_t>(j - i));
    i = j;
  }
  return b;
}

namespace {

double joint_from_counts(double total, double mass, const CellBatch& batch, auto&& count_of,
                         double eta) {
  double lp = std::lgamma(total + mass) - std::lgamma(total + mass + static_cast<double>(batch.size));
  for (const auto& [cell, mult] : batch.runs) {
    const double c = count_of(cell) + eta;
    lp += std::lgamma(c + mult) - std::lgamma(c);
  }
  return lp;
}

}  // namespace

double log_space_joint_predictive(const DirMultStats& s, const CellBatch& batch) {
  return joint_from_counts(static_cast<double>(s.total()), s.vocabulary() * s.eta(), batch,
                           [&](Cell c) { return static_cast<double>(s.count(c)); }, s.eta());
}

double log_space_joint_prior_predictive(std::uint32_t vocabulary, double eta,
                                        const CellBatch& batch) {
  return joint_from_counts(0.0, vocabulary * eta, batch, [](Cell) { return 0.0; }, eta);
}

double log_space_marginal(const DirMultStats& s) {
  const double mass = s.vocabulary() * s.eta();
  double lp = std::lgamma(mass) - std::lgamma(static_cast<double>(s.total()) + mass);
  const double base = std::lgamma(s.eta());
  for (std::int32_t c : s.counts())
    if (c > 0) lp += std::lgamma(c + s.eta()) - base;
  return lp;
}

NigPrior default_nig_prior(std::span<const double> data) {
  NigPrior p;
  if (data.empty()) return p;
  double mean = 0.0;
  for (double v : data) mean += v;
  mean /= static_cast<double>(data.size());
  double var = 0.0;
  for (double v : data) var += (v - mean) * (v - mean);
  var /= static_cast<double>(data.size());
  // Loose on the mean, and the prior mean of a mode's variance is a tenth of
  // the pooled variance. Tying both to the pooled spread merges separated modes.
  p.mu0 = mean;
  p.kappa0 = 1e-3;
  p.a0 = 2.0;
  p.b0 = 0.1 * (var > 1e-12 ? var : 1.0);
  return p;
}

NigStats::NigStats(const NigPrior& prior) : prior_(prior) {
  if (!(prior.kappa0 > 0.0) || !(prior.a0 > 0.0) || !(prior.b0 > 0.0))
    throw InvalidInput("Normal-Inverse-Gamma prior needs kappa0, a0, b0 > 0");
}

void NigStats::add(double v) {
  const __int128 q = quantize(v);
  ++n_;
  sum_ += q;
  sum_sq_ += q * q;
}

void NigStats::remove(double v) {
  if (n_ <= 0) throw ConsistencyError("removing a value from empty Normal statistics");
  const __int128 q = quantize(v);
  --n_;
  sum_ -= q;
  sum_sq_ -= q * q;
}

void NigStats::merge(const NigStats& other) {
  n_ += other.n_;
  sum_ += other.sum_;
  sum_sq_ += other.sum_sq_;
}

double NigStats::sum() const { return static_cast<double>(static_cast<long double>(sum_) / kQuantum); }

double NigStats::sum_sq() const {
  return static_cast<double>(static_cast<long double>(sum_sq_) / (kQuantum * kQuantum));
}

double NigStats::centered_sum_sq() const {
  if (n_ == 0) return 0.0;
  const long double s = static_cast<long double>(sum_);
  const long double ss = static_cast<long double>(sum_sq_) - s * s / static_cast<long double>(n_);
  return std::max(0.0, static_cast<double>(ss / (static_cast<long double>(kQuantum) * kQuantum)));
}

NigStats::Posterior NigStats::posterior() const {
  const double n = static_cast<double>(n_);
  Posterior p{prior_.mu0, prior_.kappa0, prior_.a0, prior_.b0};
  if (n_ == 0) return p;
  const double mean = sum() / n;
  p.kappa = prior_.kappa0 + n;
  p.mu = (prior_.kappa0 * prior_.mu0 + n * mean) / p.kappa;
  p.a = prior_.a0 + 0.5 * n;
  const double d = mean - prior_.mu0;
  p.b = prior_.b0 + 0.5 * centered_sum_sq() + prior_.kappa0 * n * d * d / (2.0 * p.kappa);
  return p;
}

StudentT predictive_student_t(const NigStats& stats) {
  const auto p = stats.posterior();
  const double scale2 = p.b * (p.kappa + 1.0) / (p.a * p.kappa);
  if (!(scale2 > 0.0)) throw ConsistencyError("non-positive Student-t scale");
  return {p.mu, std::sqrt(scale2), 2.0 * p.a};
}

double student_t_log_density(const StudentT& t, double x) {
  const double z = (x - t.location) / t.scale;
  return std::lgamma(0.5 * (t.dof + 1.0)) - std::lgamma(0.5 * t.dof) -
         0.5 * std::log(t.dof * std::numbers::pi) - std::log(t.scale) -
         0.5 * (t.dof + 1.0) * std::log1p(z * z / t.dof);
}

// Evaluated on the same grid the statistics use, so a sequential fold agrees
// with the joint marginal ratio.
double log_scalar_predictive(const NigStats& stats, double value) {
  const double snapped = static_cast<double>(quantize(value)) / kQuantum;
  return student_t_log_density(predictive_student_t(stats), snapped);
}

double scalar_predictive(const NigStats& stats, double value) {
  return std::exp(log_scalar_predictive(stats, value));
}

double log_nig_marginal(const NigStats& stats) {
  const auto p = stats.posterior();
  const NigPrior& q = stats.prior();
  const double n = static_cast<double>(stats.n());
  return std::lgamma(p.a) - std::lgamma(q.a0) + q.a0 * std::log(q.b0) - p.a * std::log(p.b) +
         0.5 * (std::log(q.kappa0) - std::log(p.kappa)) -
         0.5 * n * std::log(2.0 * std::numbers::pi);
}

double log_scalar_joint_predictive(const NigStats& stats, const NigStats& batch) {
  if (batch.n() == 0) return 0.0;
  NigStats merged = stats;
  merged.merge(batch);
  return log_nig_marginal(merged) - log_nig_marginal(stats);
}

}  // namespace thdp
