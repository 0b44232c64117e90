#include "polaron/finite_volume.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "polaron/parallel.hpp"
#include "polaron/stats.hpp"

namespace polaron {

namespace {

double overlap(double a0, double a1, double b0, double b1) {
  return std::max(0.0, std::min(a1, b1) - std::max(a0, b0));
}

/// Exact second moments for one configuration with fixed weights: Brownian on
/// dormant stretches, tilted Gaussian on clusters (cells refined at the
/// functional endpoints).
class ConfigGaussian {
 public:
  ConfigGaussian(const PoissonConfiguration& config, std::span<const WeightVector> weights,
                 std::span<const double> cut_times)
      : config_(config) {
    if (weights.size() != config.clusters.size()) {
      throw std::invalid_argument("one weight vector per cluster required");
    }
    gaussians_.reserve(config.clusters.size());
    for (std::size_t r = 0; r < config.clusters.size(); ++r) {
      const double off = config.cluster_offsets[r];
      const double span = config.clusters[r].sigma_star();
      std::vector<double> local;
      for (double t : cut_times) {
        if (t > off && t < off + span) local.push_back(t - off);
      }
      gaussians_.emplace_back(config.clusters[r], weights[r], local);
    }
  }

  double variance(double a, double b) const {
    if (b < a) std::swap(a, b);
    double cluster_part = 0.0, covered = 0.0;
    for (std::size_t r = 0; r < gaussians_.size(); ++r) {
      const double off = config_.cluster_offsets[r];
      const double span = config_.clusters[r].sigma_star();
      const double x = std::max(a, off), y = std::min(b, off + span);
      if (y > x) {
        cluster_part += gaussians_[r].window_variance(x - off, y - off);
        covered += y - x;
      }
    }
    return cluster_part + (b - a - covered);  // dormant stretches are Brownian
  }

  double covariance(double a1, double b1, double a2, double b2) const {
    if (b1 < a1) std::swap(a1, b1);
    if (b2 < a2) std::swap(a2, b2);
    double cluster_part = 0.0, covered = 0.0;
    for (std::size_t r = 0; r < gaussians_.size(); ++r) {
      const double off = config_.cluster_offsets[r];
      const double span = config_.clusters[r].sigma_star();
      const double x1 = std::max(a1, off), y1 = std::min(b1, off + span);
      const double x2 = std::max(a2, off), y2 = std::min(b2, off + span);
      if (y1 > x1 && y2 > x2) {
        cluster_part += gaussians_[r].window_covariance(x1 - off, y1 - off, x2 - off, y2 - off);
      }
      covered += overlap(std::max(a1, a2), std::min(b1, b2), off, off + span);
    }
    const double shared = overlap(a1, b1, a2, b2);
    return cluster_part + (shared - covered);
  }

 private:
  const PoissonConfiguration& config_;
  std::vector<ClusterGaussian> gaussians_;
};

std::vector<double> functional_cuts(const FunctionalSpec& f) {
  if (const auto* sm = std::get_if<SecondMoment>(&f)) return {sm->a, sm->b};
  if (const auto* ip = std::get_if<IncrementProduct>(&f)) return {ip->a1, ip->b1, ip->a2, ip->b2};
  const auto& pr = std::get<IntervalProbability>(f);
  return {pr.a, pr.b};
}

double evaluate_functional(const ConfigGaussian& g, const FunctionalSpec& f,
                           double* variance_out) {
  if (const auto* sm = std::get_if<SecondMoment>(&f)) {
    const double v = g.variance(sm->a, sm->b);
    if (variance_out) *variance_out = v;
    return v;
  }
  if (const auto* ip = std::get_if<IncrementProduct>(&f)) {
    if (variance_out) *variance_out = -1.0;
    return g.covariance(ip->a1, ip->b1, ip->a2, ip->b2);
  }
  const auto& pr = std::get<IntervalProbability>(f);
  const double v = g.variance(pr.a, pr.b);
  if (variance_out) *variance_out = v;
  if (v <= 0.0) return (pr.lo <= 0.0 && 0.0 <= pr.hi) ? 1.0 : 0.0;
  const double sd = std::sqrt(v);
  return normal_cdf(pr.hi / sd) - normal_cdf(pr.lo / sd);
}

}  // namespace

double poisson_config_mean_count(double alpha, double horizon) {
  return alpha * (2.0 * horizon - 1.0 + std::exp(-2.0 * horizon));
}

PoissonConfiguration make_poisson_config(double horizon, std::vector<LifeInterval> intervals) {
  PoissonConfiguration config;
  config.horizon = horizon;
  config.intervals = std::move(intervals);
  std::vector<LifeInterval> sorted = config.intervals;
  std::sort(sorted.begin(), sorted.end(),
            [](const LifeInterval& a, const LifeInterval& b) { return a.birth < b.birth; });
  std::size_t i = 0;
  while (i < sorted.size()) {
    std::vector<LifeInterval> group{sorted[i]};
    double reach = sorted[i].death;
    std::size_t j = i + 1;
    while (j < sorted.size() && sorted[j].birth < reach) {
      reach = std::max(reach, sorted[j].death);
      group.push_back(sorted[j]);
      ++j;
    }
    const double off = group.front().birth;
    for (auto& iv : group) {
      iv.birth -= off;
      iv.death -= off;
    }
    config.clusters.push_back(ActivePeriod::from_intervals(std::move(group)));
    config.cluster_offsets.push_back(off);
    i = j;
  }
  return config;
}

PoissonConfiguration sample_poisson_config(double alpha, double horizon, Rng& rng) {
  if (!(alpha >= 0.0)) throw std::invalid_argument("alpha must be nonnegative");
  if (!(horizon > 0.0)) throw std::invalid_argument("horizon must be positive");
  const double mean = poisson_config_mean_count(alpha, horizon);
  // Knuth's product method; the configuration mean is small at desk scale.
  std::size_t count = 0;
  double p = rng.uniform_pos();
  const double floor_p = std::exp(-mean);
  while (p > floor_p) {
    ++count;
    p *= rng.uniform_pos();
  }
  std::vector<LifeInterval> intervals;
  intervals.reserve(count);
  for (std::size_t k = 0; k < count; ++k) {
    // Start density on [-T, T] proportional to 1 - e^{-(T-s)}; exact rejection.
    double s;
    do {
      s = -horizon + 2.0 * horizon * rng.uniform();
    } while (rng.uniform() >= -std::expm1(-(horizon - s)));
    // Length: Exp(1) truncated to [0, T - s] by inverse CDF.
    const double cap = -std::expm1(-(horizon - s));
    const double len = -std::log1p(-rng.uniform() * cap);
    intervals.push_back({s, s + len});
  }
  auto config = make_poisson_config(horizon, std::move(intervals));
  return config;
}

double log_weight(const PoissonConfiguration& config, std::span<const EnvelopeDraw> draws,
                  double /*lambda_ref*/) {
  if (draws.size() != config.clusters.size()) {
    throw std::invalid_argument("one envelope draw per cluster required");
  }
  double lw = 0.0;
  for (std::size_t r = 0; r < config.clusters.size(); ++r) {
    const ClusterStats stats = cluster_stats(config.clusters[r]);
    lw += log_f_upper_bound(stats) + draws[r].log_ratio;
  }
  return lw;
}

double inner_functional_value(const PoissonConfiguration& config,
                              std::span<const WeightVector> weights,
                              const FunctionalSpec& functional) {
  const ConfigGaussian g(config, weights, functional_cuts(functional));
  return evaluate_functional(g, functional, nullptr);
}

SnisEstimate estimate_finite_T(double alpha, double horizon, const FunctionalSpec& functional,
                               std::size_t n_samples, std::uint64_t seed, unsigned threads,
                               double ess_floor) {
  if (n_samples < 2) throw std::invalid_argument("need at least two configurations");
  const std::vector<double> cuts = functional_cuts(functional);
  std::vector<double> log_w(n_samples), value(n_samples);
  std::vector<double> inner_var(n_samples, 0.0);
  parallel_for(n_samples, threads, [&](std::size_t i) {
    Rng stream = Rng::derive(seed, kStreamPoisson, i);
    const PoissonConfiguration config = sample_poisson_config(alpha, horizon, stream);
    std::vector<EnvelopeDraw> draws;
    std::vector<WeightVector> weights;
    draws.reserve(config.clusters.size());
    for (const auto& cluster : config.clusters) {
      draws.push_back(draw_envelope(cluster, cluster_stats(cluster), stream));
      weights.push_back(draws.back().u);
    }
    log_w[i] = log_weight(config, draws);
    const ConfigGaussian g(config, weights, cuts);
    value[i] = evaluate_functional(g, functional, &inner_var[i]);
  });
  const double shift = *std::max_element(log_w.begin(), log_w.end());
  double sw = 0.0, sww = 0.0, swv = 0.0;
  for (std::size_t i = 0; i < n_samples; ++i) {
    const double w = std::exp(log_w[i] - shift);
    sw += w;
    sww += w * w;
    swv += w * value[i];
  }
  SnisEstimate out;
  out.n_samples = n_samples;
  out.estimate = swv / sw;
  double s2 = 0.0;
  for (std::size_t i = 0; i < n_samples; ++i) {
    const double w = std::exp(log_w[i] - shift);
    const double d = value[i] - out.estimate;
    s2 += w * w * d * d;
  }
  out.std_error = std::sqrt(s2) / sw;
  out.ess = sw * sw / sww;
  out.flagged = out.ess < ess_floor;
  out.min_inner = *std::min_element(value.begin(), value.end());
  out.max_inner = *std::max_element(value.begin(), value.end());
  // Domination audit: an inner variance may never exceed its Brownian value.
  for (std::size_t i = 0; i < n_samples; ++i) {
    if (inner_var[i] < 0.0) continue;  // functional without a variance reading
    double brownian = 0.0;
    if (const auto* sm = std::get_if<SecondMoment>(&functional)) brownian = sm->b - sm->a;
    if (const auto* pr = std::get_if<IntervalProbability>(&functional)) brownian = pr->b - pr->a;
    if (brownian > 0.0 && inner_var[i] > brownian * (1.0 + 1e-12)) ++out.bound_violations;
  }
  return out;
}

std::vector<ZhatRow> estimate_zhat_convergence(double alpha, double lambda,
                                               std::span<const double> remaining_times,
                                               std::size_t n_samples, std::uint64_t seed,
                                               unsigned threads) {
  std::vector<ZhatRow> table;
  const double target = (lambda + alpha) / alpha;
  for (std::size_t k = 0; k < remaining_times.size(); ++k) {
    const double remaining = remaining_times[k];
    std::vector<double> log_v(n_samples);
    parallel_for(n_samples, threads, [&](std::size_t i) {
      Rng stream = Rng::derive(seed, kStreamTerminal, k * n_samples + i);
      const ActivePeriod xi = sample_cluster_terminal(alpha, remaining, stream);
      const ClusterStats stats = cluster_stats(xi);
      log_v[i] = -lambda * stats.sigma_star + log_f_hat(xi, stats, 1, stream);
    });
    const double shift = *std::max_element(log_v.begin(), log_v.end());
    std::vector<double> v(n_samples);
    for (std::size_t i = 0; i < n_samples; ++i) v[i] = std::exp(log_v[i] - shift);
    const auto ms = mean_se(v);
    ZhatRow row;
    row.remaining = remaining;
    row.estimate = std::exp(shift) * ms.mean;
    row.std_error = std::exp(shift) * ms.se;
    row.target = target;
    row.deviation = std::abs(row.estimate - target);
    row.rel_deviation = row.deviation / target;
    table.push_back(row);
  }
  return table;
}

}  // namespace polaron
