#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <memory>
#include <span>
#include <utility>
#include <vector>

#include "polaron/cluster.hpp"
#include "polaron/rng.hpp"

namespace polaron {

/// One positive weight per life interval, death order (same indexing as
/// ClusterStats::taus / deltas).
using WeightVector = std::vector<double>;

void validate_weights(const ActivePeriod& xi, const WeightVector& u);

/// Overlap covariance C_ik = u_i u_k |J_i inter J_k| of the weighted interval
/// increments. Dense; intended for desk-scale clusters.
Eigen::MatrixXd overlap_covariance(const ActivePeriod& xi, const WeightVector& u);

/// log det(I + C) via Cholesky; sparse path above a size threshold (only
/// overlapping interval pairs contribute). One 1e-12 jitter retry on
/// numerical indefiniteness, then a hard error.
double log_det_i_plus_c(const ActivePeriod& xi, const WeightVector& u);

/// Gaussian normalizer Phi = det(I + C)^{-3/2} in (0, 1].
double phi(const ActivePeriod& xi, const WeightVector& u);
double log_phi(const ActivePeriod& xi, const WeightVector& u);

/// Sandwich bounds: prod(1 + u_i^2 tau_i)^{-3/2} <= Phi <= prod(1 + u_i^2 delta_i)^{-3/2}
/// (lifetime-based lower bound, death-gap upper bound).
std::pair<double, double> phi_bounds(const ActivePeriod& xi, const WeightVector& u);
std::pair<double, double> log_phi_bounds(const ActivePeriod& xi, const WeightVector& u);

/// Precision matrix of the tilted Gaussian on jump-cell increments:
/// diag(1/delta_r) + sum_i u_i^2 a_i a_i^T with a_i the 0/1 cell membership
/// of interval i. Dense assembly.
Eigen::MatrixXd cell_precision(const ActivePeriod& xi, const WeightVector& u);

/// Factorized cell-increment Gaussian for one weighted cluster. Cells are the
/// jump-time subdivision, optionally refined at extra interior times (the
/// tilt couples only cell totals, so refinement just splits diagonal terms).
/// Small systems use a dense Cholesky; larger ones a sparse one without
/// reordering (the membership structure is banded).
class ClusterGaussian {
 public:
  ClusterGaussian(const ActivePeriod& xi, const WeightVector& u,
                  std::span<const double> extra_times = {});

  int cells() const { return static_cast<int>(lengths_.size()); }
  const std::vector<double>& cell_lengths() const { return lengths_; }
  /// Local-time cell boundaries, size cells()+1, from 0 to sigma*.
  const std::vector<double>& boundaries() const { return bounds_; }

  double log_det_precision() const { return logdet_p_; }
  /// log det(I + C) recovered from the cell form: det P * prod(cell lengths).
  double log_det_i_plus_c() const;

  Eigen::VectorXd solve(const Eigen::VectorXd& b) const;
  double quadratic_inverse(const Eigen::VectorXd& a, const Eigen::VectorXd& b) const;

  /// Per-component variance of the increment over local times [a, b]; both
  /// must coincide with cell boundaries (pass them as extra_times).
  double window_variance(double a, double b) const;
  double window_covariance(double a1, double b1, double a2, double b2) const;
  /// Per-component variance of omega(sigma*) - omega(0); bounded by sigma*.
  double total_increment_variance() const;

  /// Exact N(0, P^{-1}) cell increments, three independent coordinates
  /// (rows x, y, z; one column per cell).
  Eigen::Matrix3Xd sample_increments(Rng& rng) const;

 private:
  using SparseLlt = Eigen::SimplicialLLT<Eigen::SparseMatrix<double>, Eigen::Lower,
                                         Eigen::NaturalOrdering<int>>;

  Eigen::VectorXd indicator(double a, double b) const;

  std::vector<double> bounds_;
  std::vector<double> lengths_;
  bool dense_ = true;
  std::unique_ptr<Eigen::LLT<Eigen::MatrixXd>> dense_llt_;
  std::unique_ptr<SparseLlt> sparse_llt_;
  double logdet_p_ = 0.0;
};

/// Per-component variance of the full-span increment under the tilted
/// Gaussian; equals 1' P^{-1} 1 and never exceeds sigma*.
double increment_variance(const ActivePeriod& xi, const WeightVector& u);

/// Cell increments on the jump-time grid (3 x (2n-1)).
Eigen::Matrix3Xd sample_increments(const ActivePeriod& xi, const WeightVector& u, Rng& rng);

/// Brownian-bridge refinement of sampled cell increments: returns increments
/// between consecutive entries of `times` (local cluster time, sorted,
/// within [0, sigma*]), consistent with the given cell totals. Requesting
/// exactly the jump times returns the cell increments unchanged.
Eigen::Matrix3Xd refine_path(const ActivePeriod& xi, const Eigen::Matrix3Xd& cell_increments,
                             std::span<const double> times, Rng& rng);

/// One draw from the normalized per-interval envelope density
/// sqrt(delta_i) (1 + u_i^2 delta_i)^{-3/2} (inverse CDF), together with the
/// log acceptance ratio log Phi - log(envelope bound) in (-inf, 0].
struct EnvelopeDraw {
  WeightVector u;
  double log_ratio = 0.0;
};
EnvelopeDraw draw_envelope(const ActivePeriod& xi, const ClusterStats& stats, Rng& rng);

/// log of the integrated-weight upper bound prod sqrt(2/pi) / sqrt(delta_i).
double log_f_upper_bound(const ClusterStats& stats);

struct WeightSamplerOptions {
  std::size_t max_proposals = 1'000'000;
};

/// Exact draw from the conditional weight law beta(xi, .) by rejection from
/// the envelope; the acceptance ratio is in [0,1] by the death-gap bound.
WeightVector sample_weights(const ActivePeriod& xi, Rng& rng,
                            const WeightSamplerOptions& opt = {});

struct FEstimate {
  double estimate = 0.0;
  double std_error = 0.0;
  double log_estimate = 0.0;
  std::size_t n_samples = 0;
};

/// Unbiased importance-sampling estimate of the integrated cluster weight
/// F(xi) = (sqrt(2/pi))^n * integral of Phi over the weight orthant.
FEstimate estimate_F(const ActivePeriod& xi, std::size_t n_samples, Rng& rng);

/// log of a k-draw unbiased F estimate; the workhorse for the tilt and SNIS
/// estimators (log domain: large-coupling clusters overflow doubles).
double log_f_hat(const ActivePeriod& xi, const ClusterStats& stats, std::size_t k, Rng& rng);

}  // namespace polaron
