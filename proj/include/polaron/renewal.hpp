#pragma once

#include <cstdint>
#include <variant>
#include <vector>

#include "polaron/cluster.hpp"
#include "polaron/gaussian_cluster.hpp"

namespace polaron {

struct DormantGap {
  double length = 0.0;
};

struct WeightedCluster {
  ActivePeriod cluster;
  WeightVector weights;
};

/// One item of the alternating renewal configuration, placed at an absolute
/// start time.
struct RenewalItem {
  double start = 0.0;
  std::variant<DormantGap, WeightedCluster> body;

  bool is_gap() const { return std::holds_alternative<DormantGap>(body); }
  double span() const {
    return is_gap() ? std::get<DormantGap>(body).length
                    : std::get<WeightedCluster>(body).cluster.sigma_star();
  }
  double end() const { return start + span(); }
};

/// Alternating dormant gaps and weighted active periods covering a window;
/// the first and last item may be cut by the window endpoints.
struct RenewalConfiguration {
  double window_lo = 0.0;
  double window_hi = 0.0;
  std::vector<RenewalItem> items;
  bool first_cut = false;
  bool last_cut = false;

  /// Alternation and exact tiling of the window (1e-9 absolute).
  void validate() const;
  /// Fraction of the window covered by active periods.
  double occupancy() const;
  /// True if a single active period covers [-a, a].
  bool covered_by_single_cluster(double a) const;
};

struct PathSample {
  std::vector<double> times;
  Eigen::Matrix3Xd increments;  // one column per consecutive time pair
};

/// Dormant-period length under the tilted gap law: Exp(alpha + lambda).
DormantGap sample_tilted_gap(double alpha, double lambda, Rng& rng);

/// Sampling-importance-resampling source for tilted clusters: a fixed pool of
/// free-law clusters with unbiased weights e^{-lambda sigma*} F-hat, resampled
/// by inverse CDF; the attached weights are exact conditional draws. The
/// resampling bias is O(1/pool) and shrinks by growing the pool.
class TiltedClusterSampler {
 public:
  TiltedClusterSampler(double alpha, double lambda, std::size_t pool_size,
                       std::uint64_t seed, unsigned threads = 1,
                       const ClusterOptions& copt = {}, bool unit_weights = false);

  double alpha() const { return alpha_; }
  double lambda() const { return lambda_; }
  std::size_t pool_size() const { return pool_.size(); }
  const ActivePeriod& pool_cluster(std::size_t i) const { return pool_[i]; }
  std::span<const double> normalized_weights() const { return weights_; }

  std::size_t draw_index(Rng& rng) const;
  WeightedCluster draw(Rng& rng) const;

  /// Self-normalized estimate of the tilted mean cluster span, with SE.
  double mean_span() const { return m1_; }
  double mean_span_se() const { return m1_se_; }

 private:
  double alpha_;
  double lambda_;
  std::vector<ActivePeriod> pool_;
  std::vector<double> weights_;  // normalized
  std::vector<double> cumulative_;
  double m1_ = 0.0;
  double m1_se_ = 0.0;
};

/// Convenience one-shot draw (builds a pool internally; prefer constructing
/// a TiltedClusterSampler when drawing repeatedly).
WeightedCluster sample_tilted_cluster(double alpha, double lambda, std::size_t pool_size,
                                      std::uint64_t seed, Rng& rng);

/// Burn-in long enough for the start of the alternating renewal to be
/// forgotten: 50 cycles of the mean cycle length.
double default_burn_in(double mean_active, double mean_gap);

/// Stationary window by burn-in: start an alternating renewal at a dormant
/// onset at -half_width - burn_in and record the items meeting the window.
RenewalConfiguration sample_stationary_window(const TiltedClusterSampler& sampler,
                                              double half_width, double burn_in, Rng& rng);

/// Path increments at the requested times: raw Brownian increments on gaps,
/// exact tilted-Gaussian sampling plus bridge refinement on clusters.
PathSample sample_polaron_path(const RenewalConfiguration& config,
                               std::span<const double> times, Rng& rng);

struct Sigma2Estimate {
  double sigma2 = 0.0;
  double se = 0.0;
  double gamma = 0.0;        // tilted mean within-cluster increment variance
  double mean_span = 0.0;    // tilted mean sigma*
  double gap_variance = 0.0; // (alpha+lambda)^{-1}
  std::size_t n_clusters = 0;
  bool in_range = false;     // CI strictly inside (0,1)
};

/// Ratio estimator for the limiting CLT variance
/// sigma^2 = (gap + Gamma) / (gap + L); per-cluster variances are exact
/// linear algebra (no path sampling), weights are self-normalized.
Sigma2Estimate estimate_sigma2(double alpha, double lambda, std::size_t n_clusters,
                               std::uint64_t seed, unsigned threads = 1);

/// Rescaled window increments (omega(A) - omega(-A)) / sqrt(2A) over
/// independent stationary replicas; the raw material for CLT checks.
std::vector<Eigen::Vector3d> sample_rescaled_increments(const TiltedClusterSampler& sampler,
                                                        double half_width, double burn_in,
                                                        std::size_t n_replicas,
                                                        std::uint64_t seed,
                                                        unsigned threads = 1);

struct MixingRow {
  double a = 0.0;
  double f = 0.0;      // probability that one active period covers [-a, a]
  double f_se = 0.0;
  double corr = 0.0;   // correlation of clipped increments on (-inf,-a) / (a,inf) sides
  double corr_se = 0.0;
};

struct MixingReport {
  std::vector<MixingRow> rows;
  double occupancy = 0.0;
  double occupancy_se = 0.0;
  double decay_rate = 0.0;  // fitted exponent of f(a)
  double decay_rate_se = 0.0;
  bool rate_positive = false;
  std::size_t n_replicas = 0;
};

/// Coverage decay and cross-window correlations over stationary replicas.
MixingReport estimate_mixing(double alpha, double lambda, std::span<const double> gaps,
                             std::size_t n_samples, std::uint64_t seed,
                             unsigned threads = 1, std::size_t pool_size = 10'000);

}  // namespace polaron
