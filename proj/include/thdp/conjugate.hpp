// Apache License, Version 2.0, refer to LICENSE.txt

#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "thdp/codebook.hpp"

namespace thdp {

/// Dirichlet-Multinomial sufficient statistics for one space dish.
class DirMultStats {
 public:
  DirMultStats() = default;
  DirMultStats(std::uint32_t vocabulary, double eta);

  void add(Cell c);
  void remove(Cell c);

  std::uint32_t vocabulary() const { return static_cast<std::uint32_t>(counts_.size()); }
  double eta() const { return eta_; }
  std::int64_t total() const { return total_; }
  std::int32_t count(Cell c) const { return counts_[c]; }
  const std::vector<std::int32_t>& counts() const { return counts_; }

  bool operator==(const DirMultStats&) const = default;

 private:
  std::vector<std::int32_t> counts_;
  std::int64_t total_ = 0;
  double eta_ = 0.5;
};

/// (counts[cell] + eta) / (total + V eta)
double space_predictive(const DirMultStats& stats, Cell cell);
double log_space_predictive(const DirMultStats& stats, Cell cell);

/// A set of cells grouped into (cell, multiplicity) runs, for joint predictives.
struct CellBatch {
  std::vector<std::pair<Cell, std::int32_t>> runs;
  std::int64_t size = 0;
};

CellBatch make_cell_batch(std::span<const Cell> cells);

/// log p(cells | stats) under sequential conjugate updating.
double log_space_joint_predictive(const DirMultStats& stats, const CellBatch& batch);
/// Same, for a dish with no customers.
double log_space_joint_prior_predictive(std::uint32_t vocabulary, double eta,
                                        const CellBatch& batch);
/// log marginal likelihood of all customers folded into `stats`.
double log_space_marginal(const DirMultStats& stats);

struct NigPrior {
  double mu0 = 0.0;
  double kappa0 = 1.0;
  double a0 = 1.0;
  double b0 = 1.0;

  bool operator==(const NigPrior&) const = default;
};

NigPrior default_nig_prior(std::span<const double> data);

/// Normal-Inverse-Gamma sufficient statistics. Values are accumulated on a
/// fixed binary grid (2^-20) in integers so add/remove are exact inverses.
class NigStats {
 public:
  NigStats() = default;
  explicit NigStats(const NigPrior& prior);

  void add(double v);
  void remove(double v);
  void merge(const NigStats& other);

  const NigPrior& prior() const { return prior_; }
  std::int64_t n() const { return n_; }
  double sum() const;
  double sum_sq() const;
  /// sum of squared deviations from the sample mean
  double centered_sum_sq() const;

  struct Posterior {
    double mu;
    double kappa;
    double a;
    double b;
  };
  Posterior posterior() const;

  bool operator==(const NigStats& o) const {
    return prior_ == o.prior_ && n_ == o.n_ && sum_ == o.sum_ && sum_sq_ == o.sum_sq_;
  }

 private:
  NigPrior prior_;
  std::int64_t n_ = 0;
  __int128 sum_ = 0;
  __int128 sum_sq_ = 0;
};

struct StudentT {
  double location;
  double scale;  // not the variance
  double dof;
};

StudentT predictive_student_t(const NigStats& stats);
double student_t_log_density(const StudentT& t, double x);

/// Posterior predictive density of a scalar (Student-t).
double scalar_predictive(const NigStats& stats, double value);
double log_scalar_predictive(const NigStats& stats, double value);
double log_nig_marginal(const NigStats& stats);
/// log p(batch | stats): joint predictive of all values folded into `batch`.
double log_scalar_joint_predictive(const NigStats& stats, const NigStats& batch);

}  // namespace thdp
