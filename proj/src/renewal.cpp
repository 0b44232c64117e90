#include "polaron/renewal.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "polaron/parallel.hpp"
#include "polaron/stats.hpp"

namespace polaron {

void RenewalConfiguration::validate() const {
  if (items.empty()) throw std::invalid_argument("empty renewal configuration");
  if (!(window_hi > window_lo)) throw std::invalid_argument("empty window");
  double covered = 0.0;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i > 0) {
      if (items[i].is_gap() == items[i - 1].is_gap()) {
        throw std::invalid_argument("items must strictly alternate");
      }
      if (std::abs(items[i].start - items[i - 1].end()) > 1e-9) {
        throw std::invalid_argument("items must be contiguous");
      }
    }
    covered += std::min(items[i].end(), window_hi) - std::max(items[i].start, window_lo);
  }
  if (std::abs(covered - (window_hi - window_lo)) > 1e-9) {
    throw std::invalid_argument("items must tile the window exactly");
  }
  if (items.front().start > window_lo || items.back().end() < window_hi) {
    throw std::invalid_argument("items must reach both window endpoints");
  }
}

double RenewalConfiguration::occupancy() const {
  double active = 0.0;
  for (const auto& item : items) {
    if (item.is_gap()) continue;
    active += std::max(0.0, std::min(item.end(), window_hi) - std::max(item.start, window_lo));
  }
  return active / (window_hi - window_lo);
}

bool RenewalConfiguration::covered_by_single_cluster(double a) const {
  for (const auto& item : items) {
    if (!item.is_gap() && item.start <= -a && item.end() >= a) return true;
  }
  return false;
}

DormantGap sample_tilted_gap(double alpha, double lambda, Rng& rng) {
  if (!(alpha + lambda > 0.0)) throw std::invalid_argument("alpha + lambda must be positive");
  return DormantGap{rng.exponential(alpha + lambda)};
}

TiltedClusterSampler::TiltedClusterSampler(double alpha, double lambda, std::size_t pool_size,
                                           std::uint64_t seed, unsigned threads,
                                           const ClusterOptions& copt, bool unit_weights)
    : alpha_(alpha), lambda_(lambda) {
  if (pool_size < 2) throw std::invalid_argument("pool size must be >= 2");
  pool_.resize(pool_size);
  std::vector<double> log_w(pool_size);
  parallel_for(pool_size, threads, [&](std::size_t i) {
    Rng stream = Rng::derive(seed, kStreamRenewalPool, i);
    pool_[i] = sample_cluster(alpha_, stream, copt);
    if (unit_weights) {
      log_w[i] = 0.0;
    } else {
      const ClusterStats stats = cluster_stats(pool_[i]);
      log_w[i] = -lambda_ * stats.sigma_star + log_f_hat(pool_[i], stats, 1, stream);
    }
  });
  const double shift = *std::max_element(log_w.begin(), log_w.end());
  weights_.resize(pool_size);
  double total = 0.0;
  for (std::size_t i = 0; i < pool_size; ++i) {
    weights_[i] = std::exp(log_w[i] - shift);
    total += weights_[i];
  }
  if (!(total > 0.0)) throw std::runtime_error("degenerate tilted pool: all weights vanish");
  cumulative_.resize(pool_size);
  double acc = 0.0;
  for (std::size_t i = 0; i < pool_size; ++i) {
    weights_[i] /= total;
    acc += weights_[i];
    cumulative_[i] = acc;
  }
  cumulative_.back() = 1.0;
  // Self-normalized moments of sigma*.
  m1_ = 0.0;
  for (std::size_t i = 0; i < pool_size; ++i) m1_ += weights_[i] * pool_[i].sigma_star();
  double v = 0.0;
  for (std::size_t i = 0; i < pool_size; ++i) {
    const double d = pool_[i].sigma_star() - m1_;
    v += weights_[i] * weights_[i] * d * d;
  }
  m1_se_ = std::sqrt(v);
}

std::size_t TiltedClusterSampler::draw_index(Rng& rng) const {
  const double p = rng.uniform();
  const auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), p);
  return std::min<std::size_t>(it - cumulative_.begin(), pool_.size() - 1);
}

WeightedCluster TiltedClusterSampler::draw(Rng& rng) const {
  const std::size_t idx = draw_index(rng);
  WeightedCluster wc;
  wc.cluster = pool_[idx];
  wc.weights = sample_weights(wc.cluster, rng);
  return wc;
}

WeightedCluster sample_tilted_cluster(double alpha, double lambda, std::size_t pool_size,
                                      std::uint64_t seed, Rng& rng) {
  TiltedClusterSampler sampler(alpha, lambda, pool_size, seed);
  return sampler.draw(rng);
}

double default_burn_in(double mean_active, double mean_gap) {
  return 50.0 * std::max(1.0, mean_active + mean_gap);
}

RenewalConfiguration sample_stationary_window(const TiltedClusterSampler& sampler,
                                              double half_width, double burn_in, Rng& rng) {
  if (!(half_width > 0.0)) throw std::invalid_argument("half width must be positive");
  if (burn_in < 0.0) throw std::invalid_argument("burn-in must be nonnegative");
  RenewalConfiguration config;
  config.window_lo = -half_width;
  config.window_hi = half_width;
  double t = -half_width - burn_in;
  bool dormant = true;
  while (t < half_width) {
    RenewalItem item;
    item.start = t;
    if (dormant) {
      item.body = sample_tilted_gap(sampler.alpha(), sampler.lambda(), rng);
    } else {
      item.body = sampler.draw(rng);
    }
    const double span = item.span();
    if (t + span > -half_width) config.items.push_back(std::move(item));
    t += span;
    dormant = !dormant;
  }
  config.first_cut = config.items.front().start < config.window_lo;
  config.last_cut = config.items.back().end() > config.window_hi;
  return config;
}

PathSample sample_polaron_path(const RenewalConfiguration& config,
                               std::span<const double> times, Rng& rng) {
  if (times.size() < 2) throw std::invalid_argument("need at least two times");
  for (std::size_t k = 0; k < times.size(); ++k) {
    if (times[k] < config.window_lo - 1e-12 || times[k] > config.window_hi + 1e-12) {
      throw std::invalid_argument("requested time outside the window");
    }
    if (k > 0 && !(times[k] > times[k - 1])) {
      throw std::invalid_argument("times must be strictly increasing");
    }
  }
  struct Segment {
    double start, end;
    Eigen::Vector3d inc;
  };
  std::vector<Segment> segments;
  for (const auto& item : config.items) {
    // Cut points: item boundaries plus any requested times inside.
    std::vector<double> cuts{item.start, item.end()};
    for (double t : times) {
      if (t > item.start && t < item.end()) cuts.push_back(t);
    }
    std::sort(cuts.begin(), cuts.end());
    cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());
    if (item.is_gap()) {
      for (std::size_t j = 0; j + 1 < cuts.size(); ++j) {
        const double len = cuts[j + 1] - cuts[j];
        Eigen::Vector3d inc;
        const double sd = std::sqrt(len);
        for (int c = 0; c < 3; ++c) inc[c] = sd * rng.normal();
        segments.push_back({cuts[j], cuts[j + 1], inc});
      }
    } else {
      const auto& wc = std::get<WeightedCluster>(item.body);
      const Eigen::Matrix3Xd cells = sample_increments(wc.cluster, wc.weights, rng);
      std::vector<double> local(cuts.size());
      for (std::size_t j = 0; j < cuts.size(); ++j) local[j] = cuts[j] - item.start;
      local.front() = 0.0;
      local.back() = wc.cluster.sigma_star();
      const Eigen::Matrix3Xd refined = refine_path(wc.cluster, cells, local, rng);
      for (std::size_t j = 0; j + 1 < cuts.size(); ++j) {
        segments.push_back({cuts[j], cuts[j + 1], refined.col(static_cast<int>(j))});
      }
    }
  }
  PathSample out;
  out.times.assign(times.begin(), times.end());
  out.increments = Eigen::Matrix3Xd::Zero(3, static_cast<int>(times.size()) - 1);
  for (const auto& seg : segments) {
    // Segments never straddle a requested time by construction.
    for (std::size_t k = 0; k + 1 < times.size(); ++k) {
      if (seg.start >= times[k] && seg.end <= times[k + 1]) {
        out.increments.col(static_cast<int>(k)) += seg.inc;
        break;
      }
    }
  }
  return out;
}

Sigma2Estimate estimate_sigma2(double alpha, double lambda, std::size_t n_clusters,
                               std::uint64_t seed, unsigned threads) {
  if (n_clusters < 2) throw std::invalid_argument("need at least two clusters");
  // Per cluster: unnormalized weight X = e^{-lambda sigma*} * (envelope-draw
  // unbiased F estimate), value pair (V = exact per-component variance of the
  // full-span increment, sigma*). Everything else is closed form.
  std::vector<double> xs(n_clusters), gs(n_clusters), ss(n_clusters);
  parallel_for(n_clusters, threads, [&](std::size_t i) {
    Rng stream = Rng::derive(seed, kStreamSigma2, i);
    const ActivePeriod xi = sample_cluster(alpha, stream);
    const ClusterStats stats = cluster_stats(xi);
    const EnvelopeDraw draw = draw_envelope(xi, stats, stream);
    const double w = std::exp(-lambda * stats.sigma_star + log_f_upper_bound(stats) +
                              draw.log_ratio);
    const double v = increment_variance(xi, draw.u);
    xs[i] = w;
    gs[i] = w * v;
    ss[i] = w * stats.sigma_star;
  });
  const double a = 1.0 / (alpha + lambda);
  const double xbar = mean_se(xs).mean;
  const double gbar = mean_se(gs).mean;
  const double sbar = mean_se(ss).mean;
  const double num = a * xbar + gbar;
  const double den = a * xbar + sbar;
  Sigma2Estimate out;
  out.n_clusters = n_clusters;
  out.gap_variance = a;
  out.gamma = gbar / xbar;
  out.mean_span = sbar / xbar;
  out.sigma2 = num / den;
  // Delta method on f(x,g,s) = (a x + g)/(a x + s).
  const double dfdx = a * (den - num) / (den * den);
  const double dfdg = 1.0 / den;
  const double dfds = -num / (den * den);
  double var = 0.0;
  const auto n = static_cast<double>(n_clusters);
  for (std::size_t i = 0; i < n_clusters; ++i) {
    const double d = dfdx * (xs[i] - xbar) + dfdg * (gs[i] - gbar) + dfds * (ss[i] - sbar);
    var += d * d;
  }
  out.se = std::sqrt(var / (n * (n - 1.0)));
  out.in_range = (out.sigma2 - 3.0 * out.se > 0.0) && (out.sigma2 + 3.0 * out.se < 1.0);
  return out;
}

std::vector<Eigen::Vector3d> sample_rescaled_increments(const TiltedClusterSampler& sampler,
                                                        double half_width, double burn_in,
                                                        std::size_t n_replicas,
                                                        std::uint64_t seed, unsigned threads) {
  std::vector<Eigen::Vector3d> out(n_replicas);
  const double norm = 1.0 / std::sqrt(2.0 * half_width);
  const std::vector<double> times{-half_width, half_width};
  parallel_for(n_replicas, threads, [&](std::size_t i) {
    Rng stream = Rng::derive(seed, kStreamWindows, i);
    const RenewalConfiguration config =
        sample_stationary_window(sampler, half_width, burn_in, stream);
    const PathSample path = sample_polaron_path(config, times, stream);
    out[i] = norm * path.increments.col(0);
  });
  return out;
}

MixingReport estimate_mixing(double alpha, double lambda, std::span<const double> gaps,
                             std::size_t n_samples, std::uint64_t seed, unsigned threads,
                             std::size_t pool_size) {
  if (gaps.empty()) throw std::invalid_argument("need at least one gap value");
  std::vector<double> sorted_gaps(gaps.begin(), gaps.end());
  std::sort(sorted_gaps.begin(), sorted_gaps.end());
  const double a_max = sorted_gaps.back();
  const double half_width = a_max + 1.5;

  TiltedClusterSampler sampler(alpha, lambda, pool_size, seed, threads);
  const double m2 = 1.0 / (alpha + lambda);
  const double burn_in = default_burn_in(sampler.mean_span(), m2);

  // One shared replica set: coverage indicators are then monotone in A by
  // construction, and the correlation windows nest.
  std::vector<double> path_times;
  for (double a : sorted_gaps) {
    path_times.push_back(-a - 1.0);
    if (a > 0.0) path_times.push_back(-a);
    path_times.push_back(a);
    path_times.push_back(a + 1.0);
  }
  std::sort(path_times.begin(), path_times.end());
  path_times.erase(std::unique(path_times.begin(), path_times.end()), path_times.end());

  const std::size_t n_gaps = sorted_gaps.size();
  std::vector<std::vector<char>> covered(n_gaps, std::vector<char>(n_samples));
  std::vector<std::vector<double>> left(n_gaps, std::vector<double>(n_samples));
  std::vector<std::vector<double>> right(n_gaps, std::vector<double>(n_samples));
  std::vector<double> occ(n_samples);
  const auto clip = [](double x) { return std::clamp(x, -1.0, 1.0); };

  parallel_for(n_samples, threads, [&](std::size_t i) {
    Rng stream = Rng::derive(seed, kStreamWindows, i);
    const RenewalConfiguration config =
        sample_stationary_window(sampler, half_width, burn_in, stream);
    occ[i] = config.occupancy();
    const PathSample path = sample_polaron_path(config, path_times, stream);
    const auto increment_over = [&](double t0, double t1) {
      Eigen::Vector3d acc = Eigen::Vector3d::Zero();
      for (std::size_t k = 0; k + 1 < path_times.size(); ++k) {
        if (path_times[k] >= t0 && path_times[k + 1] <= t1) {
          acc += path.increments.col(static_cast<int>(k));
        }
      }
      return acc;
    };
    for (std::size_t g = 0; g < n_gaps; ++g) {
      const double a = sorted_gaps[g];
      covered[g][i] = config.covered_by_single_cluster(a) ? 1 : 0;
      left[g][i] = clip(increment_over(-a - 1.0, -a)[0]);
      right[g][i] = clip(increment_over(a, a + 1.0)[0]);
    }
  });

  MixingReport rep;
  rep.n_replicas = n_samples;
  const auto occ_ms = mean_se(occ);
  rep.occupancy = occ_ms.mean;
  rep.occupancy_se = occ_ms.se;
  const auto n = static_cast<double>(n_samples);
  for (std::size_t g = 0; g < n_gaps; ++g) {
    MixingRow row;
    row.a = sorted_gaps[g];
    double count = 0.0;
    for (char c : covered[g]) count += c;
    row.f = count / n;
    row.f_se = std::sqrt(row.f * (1.0 - row.f) / n);
    row.corr = correlation(left[g], right[g]);
    row.corr_se = 1.0 / std::sqrt(n);
    rep.rows.push_back(row);
  }
  // Weighted least squares of log f on a; weights are inverse variances of
  // log f-hat (delta method: (1-f)/(n f)).
  double sw = 0.0, swa = 0.0, swy = 0.0, swaa = 0.0, sway = 0.0;
  int used = 0;
  for (const auto& row : rep.rows) {
    if (row.f <= 0.0 || row.f >= 1.0) continue;
    const double w = n * row.f / (1.0 - row.f);
    const double y = std::log(row.f);
    sw += w;
    swa += w * row.a;
    swy += w * y;
    swaa += w * row.a * row.a;
    sway += w * row.a * y;
    ++used;
  }
  if (used >= 2) {
    const double det = sw * swaa - swa * swa;
    const double slope = (sw * sway - swa * swy) / det;
    rep.decay_rate = -slope;
    rep.decay_rate_se = std::sqrt(sw / det);
    rep.rate_positive = rep.decay_rate > 2.0 * rep.decay_rate_se;
  }
  return rep;
}

}  // namespace polaron
