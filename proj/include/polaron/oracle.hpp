#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <utility>
#include <vector>

#include "polaron/rng.hpp"

namespace polaron {

/// Discretized increment path on [-T, T]: m cells of width dt = 2T/m, one 3D
/// increment per cell. Positions for the pair energy are the cumulative sums
/// anchored at 0 (the target depends on increments only), read at cell
/// midpoints.
struct GridPath {
  double horizon = 0.0;
  Eigen::Matrix3Xd increments;

  int m() const { return static_cast<int>(increments.cols()); }
  double dt() const { return 2.0 * horizon / m(); }
};

GridPath sample_brownian_grid(double horizon, int m, Rng& rng);

/// Pair energy (alpha/2) sum_{i != j} e^{-|t_i - t_j|} / |x_i - x_j| dt^2
/// with the diagonal omitted (the omitted band is O(T sqrt(dt))). Pairs with
/// |x_i - x_j| < 1e-12 contribute the 1e12 cap and bump the collision count.
class EnergyModel {
 public:
  EnergyModel(double alpha, double horizon, int m);
  double energy(const GridPath& path) const;
  double alpha() const { return alpha_; }
  std::uint64_t collisions() const { return collisions_; }
  void reset_collisions() { collisions_ = 0; }

 private:
  double alpha_;
  double horizon_;
  int m_;
  double dt_;
  std::vector<double> kernel_by_lag_;
  mutable std::uint64_t collisions_ = 0;
};

/// One-off energy evaluation (builds the kernel internally).
double energy(const GridPath& path, double alpha, double horizon);

/// Preconditioned Crank-Nicolson step: the proposal
/// sqrt(1-beta^2) * increments + beta * N(0, dt I) preserves the Brownian
/// reference, so the acceptance ratio is min(1, exp(E_new - E_old)) for the
/// attractive weight exp(+E).
std::pair<GridPath, bool> pcn_step(const GridPath& path, double beta, double alpha,
                                   double horizon, Rng& rng);

struct ChainOptions {
  std::size_t burn_in = 0;  // 0: n_steps / 5
  bool adapt_beta = true;   // tune to ~30% acceptance during burn-in, then freeze
  double target_acceptance = 0.3;
  double ess_floor = 50.0;
};

struct ChainResult {
  double estimate = 0.0;  // mean of (v . (w(T) - w(-T)))^2, coordinate-averaged
  double std_error = 0.0; // batch means
  double ess = 0.0;
  double iat = 0.0;
  double acceptance = 0.0;
  double beta = 0.0;      // frozen value
  std::uint64_t collisions = 0;
  bool flagged = false;
  double half_window_estimate = 0.0;  // same functional on [-T/2, T/2]
  double half_window_se = 0.0;
  std::size_t n_steps = 0;
};

ChainResult run_chain(double alpha, double horizon, int m, std::size_t n_steps, double beta,
                      Rng& rng, const ChainOptions& opt = {});

struct DetLemmaReport {
  int dim = 0;
  std::size_t trials = 0;
  double max_rel_det_error = 0.0;  // |det M - prod L_ii^2| / det M
  std::size_t det_violations = 0;  // relative error above 1e-9
  std::size_t bound_violations = 0;  // det(I+M) < prod(1 + gamma_i^2)
};

/// Randomized check of the conditional-variance determinant identity
/// det(M) = prod gamma_i^2 and the bound det(I+M) >= prod(1 + gamma_i^2) on
/// Wishart-style SPD matrices.
DetLemmaReport det_lemma_check(int dim, std::size_t trials, Rng& rng);

}  // namespace polaron
