#pragma once

#include <cstdint>
#include <variant>
#include <vector>

#include "polaron/cluster.hpp"
#include "polaron/gaussian_cluster.hpp"

namespace polaron {

/// A draw of the interval point process on [-T, T] together with its unique
/// decomposition into maximal overlapping groups (clusters, in local time)
/// and the dormant stretches between them.
struct PoissonConfiguration {
  double horizon = 0.0;  // T
  std::vector<LifeInterval> intervals;
  std::vector<ActivePeriod> clusters;
  std::vector<double> cluster_offsets;  // absolute start of each cluster

  std::size_t n_intervals() const { return intervals.size(); }
};

/// Expected interval count alpha * (2T - 1 + e^{-2T}).
double poisson_config_mean_count(double alpha, double horizon);

/// Samples the interval process with intensity alpha e^{-(t-s)} on
/// -T <= s < t <= T: Poisson count, then i.i.d. intervals (start density
/// proportional to 1 - e^{-(T-s)}, length truncated-exponential by inverse
/// CDF).
PoissonConfiguration sample_poisson_config(double alpha, double horizon, Rng& rng);

/// Clustering of externally supplied intervals (connected components of the
/// interval union); used by tests against a brute-force oracle.
PoissonConfiguration make_poisson_config(double horizon, std::vector<LifeInterval> intervals);

/// log of the unnormalized mixture density against the sampling proposal:
/// per cluster (sqrt(2/pi))^{n_r} Phi(xi_r, u_r) over the envelope density of
/// the drawn u_r. Any reference tilt cancels because active and dormant spans
/// tile [-T, T] exactly; lambda_ref is accepted and ignored.
double log_weight(const PoissonConfiguration& config, std::span<const EnvelopeDraw> draws,
                  double lambda_ref = 0.0);

struct SecondMoment {
  double a = 0.0, b = 0.0;  // E[(v . (w(b) - w(a)))^2]
};
struct IncrementProduct {
  double a1 = 0.0, b1 = 0.0, a2 = 0.0, b2 = 0.0;
};
struct IntervalProbability {
  double a = 0.0, b = 0.0, lo = 0.0, hi = 0.0;  // P(v . (w(b)-w(a)) in [lo, hi])
};
using FunctionalSpec = std::variant<SecondMoment, IncrementProduct, IntervalProbability>;

struct SnisEstimate {
  double estimate = 0.0;
  double std_error = 0.0;
  double ess = 0.0;
  std::size_t n_samples = 0;
  bool flagged = false;  // ess below the reliability floor
  double min_inner = 0.0;
  double max_inner = 0.0;
  std::size_t bound_violations = 0;  // inner variances above the Brownian value
};

/// Self-normalized importance-sampling estimate of a path functional under
/// the finite-horizon measure; the inner Gaussian expectation is computed
/// exactly per configuration (gaps contribute raw Brownian variance).
SnisEstimate estimate_finite_T(double alpha, double horizon, const FunctionalSpec& functional,
                               std::size_t n_samples, std::uint64_t seed,
                               unsigned threads = 1, double ess_floor = 50.0);

/// Exact inner conditional value of the functional for one configuration with
/// given per-cluster weight draws (exposed for the per-configuration
/// domination checks).
double inner_functional_value(const PoissonConfiguration& config,
                              std::span<const WeightVector> weights,
                              const FunctionalSpec& functional);

struct ZhatRow {
  double remaining = 0.0;
  double estimate = 0.0;
  double std_error = 0.0;
  double target = 0.0;  // (lambda + alpha) / alpha
  double deviation = 0.0;
  double rel_deviation = 0.0;
};

/// Terminal-horizon normalizer E[e^{-lambda sigma*} F(xi)] under the
/// remaining-time cluster law, tabulated against its infinite-horizon limit.
std::vector<ZhatRow> estimate_zhat_convergence(double alpha, double lambda,
                                               std::span<const double> remaining_times,
                                               std::size_t n_samples, std::uint64_t seed,
                                               unsigned threads = 1);

}  // namespace polaron
