#include "polaron/tilting.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "polaron/parallel.hpp"
#include "polaron/stats.hpp"

namespace polaron {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct ShiftedMoments {
  double mean = 0.0;  // of exp(log_v - shift)
  double sd = 0.0;
  double shift = 0.0;
  bool heavy_tail = false;
};

ShiftedMoments shifted_moments(std::span<const double> log_v, double top_fraction,
                               double share_threshold) {
  ShiftedMoments m;
  m.shift = *std::max_element(log_v.begin(), log_v.end());
  if (!std::isfinite(m.shift)) m.shift = 0.0;
  const auto n = static_cast<double>(log_v.size());
  std::vector<double> a(log_v.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < log_v.size(); ++i) {
    a[i] = std::exp(log_v[i] - m.shift);
    sum += a[i];
  }
  m.mean = sum / n;
  double ss = 0.0;
  for (double x : a) ss += (x - m.mean) * (x - m.mean);
  m.sd = log_v.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
  const std::size_t top = std::max<std::size_t>(1, static_cast<std::size_t>(top_fraction * n));
  std::nth_element(a.begin(), a.begin() + top, a.end(), std::greater<double>());
  double top_sum = 0.0;
  for (std::size_t i = 0; i < top; ++i) top_sum += a[i];
  m.heavy_tail = sum > 0.0 && top_sum > share_threshold * sum;
  return m;
}

}  // namespace

QEstimate estimate_q(double alpha, double lambda, std::size_t n_samples, Rng& rng,
                     const QOptions& opt) {
  if (!(alpha > 0.0)) throw std::invalid_argument("alpha must be positive");
  if (lambda < 0.0) throw std::invalid_argument("lambda must be nonnegative");
  const double log_prefactor = std::log(alpha / (alpha + lambda));
  std::vector<double> log_v;
  log_v.reserve(n_samples);
  LogSumExp running;
  QEstimate out;
  for (std::size_t j = 0; j < n_samples; ++j) {
    const ActivePeriod xi = sample_cluster(alpha, rng, opt.cluster);
    const ClusterStats stats = cluster_stats(xi);
    const double lv = -lambda * stats.sigma_star + log_f_hat(xi, stats, opt.u_draws, rng);
    log_v.push_back(lv);
    running.add(lv);
    if (running.count() >= opt.min_before_divergence &&
        log_prefactor + running.log_mean() > std::log(opt.divergence_threshold)) {
      out.diverged = true;
      if (opt.stop_on_divergence) break;
    }
  }
  const auto m = shifted_moments(log_v, opt.heavy_tail_top_fraction, opt.heavy_tail_share);
  const auto n = static_cast<double>(log_v.size());
  out.n_used = log_v.size();
  out.log_mean = log_prefactor + m.shift + std::log(m.mean);
  out.estimate = std::exp(out.log_mean);
  out.std_error = std::exp(log_prefactor + m.shift) * m.sd / std::sqrt(n);
  out.heavy_tail = out.heavy_tail || m.heavy_tail;
  if (out.log_mean > std::log(opt.divergence_threshold)) out.diverged = true;
  return out;
}

QEstimate estimate_L(double alpha, double lambda, std::size_t n_samples, Rng& rng,
                     const QOptions& opt) {
  if (!(alpha > 0.0)) throw std::invalid_argument("alpha must be positive");
  if (lambda < 0.0) throw std::invalid_argument("lambda must be nonnegative");
  // Gap part in closed form: E[e^{-lambda g}] = a/(a+l), E[g e^{-lambda g}] = a/(a+l)^2.
  const double gap_mass = alpha / (alpha + lambda);
  const double gap_mean = 1.0 / (alpha + lambda);
  std::vector<double> log_v;
  log_v.reserve(n_samples);
  for (std::size_t j = 0; j < n_samples; ++j) {
    const ActivePeriod xi = sample_cluster(alpha, rng, opt.cluster);
    const ClusterStats stats = cluster_stats(xi);
    const double lf = log_f_hat(xi, stats, opt.u_draws, rng);
    const double lv = std::log(gap_mass * (stats.sigma_star + gap_mean)) -
                      lambda * stats.sigma_star + lf;
    log_v.push_back(lv);
  }
  const auto m = shifted_moments(log_v, opt.heavy_tail_top_fraction, opt.heavy_tail_share);
  const auto n = static_cast<double>(log_v.size());
  QEstimate out;
  out.n_used = log_v.size();
  out.log_mean = m.shift + std::log(m.mean);
  out.estimate = std::exp(out.log_mean);
  out.std_error = std::exp(m.shift) * m.sd / std::sqrt(n);
  out.heavy_tail = m.heavy_tail;
  return out;
}

ClusterPool::ClusterPool(double alpha, std::uint64_t seed, std::size_t size,
                         std::size_t u_draws, unsigned threads, const ClusterOptions& copt)
    : alpha_(alpha), seed_(seed), u_draws_(u_draws), copt_(copt) {
  if (!(alpha > 0.0)) throw std::invalid_argument("alpha must be positive");
  grow(size, threads);
}

void ClusterPool::grow(std::size_t new_size, unsigned threads) {
  const std::size_t old_size = sigma_.size();
  if (new_size <= old_size) return;
  sigma_.resize(new_size);
  log_f_.resize(new_size);
  parallel_for(new_size - old_size, threads, [&](std::size_t k) {
    const std::size_t idx = old_size + k;
    Rng stream = Rng::derive(seed_, kStreamClusterPool, idx);
    const ActivePeriod xi = sample_cluster(alpha_, stream, copt_);
    const ClusterStats stats = cluster_stats(xi);
    sigma_[idx] = stats.sigma_star;
    log_f_[idx] = log_f_hat(xi, stats, u_draws_, stream);
  });
}

ClusterPool::Eval ClusterPool::q_hat(double lambda) const {
  std::vector<double> log_v(size());
  for (std::size_t j = 0; j < size(); ++j) log_v[j] = -lambda * sigma_[j] + log_f_[j];
  const auto m = shifted_moments(log_v, 0.01, 0.5);
  const double pref = alpha_ / (alpha_ + lambda);
  Eval e;
  e.value = pref * std::exp(m.shift) * m.mean;
  e.se = pref * std::exp(m.shift) * m.sd / std::sqrt(static_cast<double>(size()));
  e.heavy_tail = m.heavy_tail;
  return e;
}

ClusterPool::Eval ClusterPool::l_hat(double lambda) const {
  const double gap_mass = alpha_ / (alpha_ + lambda);
  const double gap_mean = 1.0 / (alpha_ + lambda);
  std::vector<double> log_v(size());
  for (std::size_t j = 0; j < size(); ++j) {
    log_v[j] = std::log(gap_mass * (sigma_[j] + gap_mean)) - lambda * sigma_[j] + log_f_[j];
  }
  const auto m = shifted_moments(log_v, 0.01, 0.5);
  Eval e;
  e.value = std::exp(m.shift) * m.mean;
  e.se = std::exp(m.shift) * m.sd / std::sqrt(static_cast<double>(size()));
  e.heavy_tail = m.heavy_tail;
  return e;
}

TiltSolution solve_lambda(double alpha, double tol, std::size_t max_samples,
                          std::uint64_t seed, const SolveOptions& opt) {
  if (!(tol > 0.0)) throw std::invalid_argument("tol must be positive");
  const double lambda_high = opt.bracket_high > 0.0
                                 ? opt.bracket_high
                                 : 3.0 * std::sqrt(2.0) * std::pow(alpha, 1.5) + opt.bracket_pad;
  std::size_t pool_size = std::min(opt.initial_pool, std::max<std::size_t>(2, max_samples));
  ClusterPool pool(alpha, seed, pool_size, opt.u_draws, opt.threads, opt.cluster);
  TiltSolution sol;
  sol.alpha = alpha;
  sol.seed = seed;
  for (;;) {
    const auto q0 = pool.q_hat(0.0);
    const auto q1 = pool.q_hat(lambda_high);
    if (q0.value < 1.0 || q1.value > 1.0) {
      throw NoBracketError(q0.value, q1.value,
                           "root not bracketed: q(0)=" + std::to_string(q0.value) +
                               ", q(" + std::to_string(lambda_high) +
                               ")=" + std::to_string(q1.value));
    }
    // q-hat is continuous and exactly non-increasing on the fixed pool, so
    // plain bisection is a deterministic root-find.
    double lo = 0.0, hi = lambda_high;
    int iterations = 0;
    while (hi - lo > 1e-12 * (1.0 + lambda_high) && iterations < 200) {
      const double mid = 0.5 * (lo + hi);
      (pool.q_hat(mid).value >= 1.0 ? lo : hi) = mid;
      ++iterations;
    }
    sol.lambda = 0.5 * (lo + hi);
    sol.bisections = iterations;
    const auto q_root = pool.q_hat(sol.lambda);
    sol.q = q_root.value;
    sol.q_se = q_root.se;
    sol.heavy_tail = q_root.heavy_tail;
    sol.n_samples = pool.size();
    if (3.0 * q_root.se <= tol || pool.size() >= max_samples) break;
    pool.grow(std::min(max_samples, pool.size() * 2), opt.threads);
  }
  const auto l_root = pool.l_hat(sol.lambda);
  sol.L = l_root.value;
  sol.L_se = l_root.se;
  return sol;
}

LyapunovReport lyapunov_check_terminal(double alpha, int n_max) {
  if (n_max < 1) throw std::invalid_argument("n_max must be >= 1");
  LyapunovReport rep;
  rep.lambda = 3.0 * std::sqrt(2.0) * std::pow(alpha, 1.5);
  rep.bound = 1.0 / std::sqrt(2.0);
  const double c2 = 1.0 / std::sqrt(alpha);
  rep.pass = true;
  rep.max_lhs = -kInf;
  for (int n = 1; n <= n_max; ++n) {
    // (alpha/(alpha+lambda)) / sqrt(n+alpha+lambda) * [alpha u(n+1)/u(n) + n u(n-1)/u(n)]
    // with u(n) = c2^n sqrt(n!): u(n+1)/u(n) = c2 sqrt(n+1), u(n-1)/u(n) = 1/(c2 sqrt(n)).
    const double lhs = (alpha / (alpha + rep.lambda)) / std::sqrt(n + alpha + rep.lambda) *
                       (alpha * c2 * std::sqrt(n + 1.0) + std::sqrt(static_cast<double>(n)) / c2);
    rep.max_lhs = std::max(rep.max_lhs, lhs);
    if (lhs > rep.bound + 1e-12 && rep.first_violation == 0) {
      rep.first_violation = n;
      rep.pass = false;
    }
  }
  return rep;
}

DriftReport drift_check_free(double alpha, int n_max) {
  if (n_max < 1) throw std::invalid_argument("n_max must be >= 1");
  DriftReport rep;
  const double c = 1.0 / std::sqrt(alpha);
  const double rhs_const = -0.5 * std::log(alpha) - std::log(3.0);
  rep.pass = true;
  rep.min_margin = kInf;
  rep.c1_largest = kInf;
  for (int n = 1; n <= n_max; ++n) {
    const double pu_over_u = alpha / (alpha + n) * c * std::sqrt(n + 1.0) +
                             n / (alpha + n) / (c * std::sqrt(static_cast<double>(n)));
    const double lhs = -std::log(pu_over_u);
    const double rhs = rhs_const + 0.5 * std::log(n + alpha);
    rep.min_margin = std::min(rep.min_margin, lhs - rhs);
    rep.c1_largest = std::min(rep.c1_largest, lhs - 0.5 * std::log(n + alpha));
    if (lhs < rhs - 1e-12 && rep.first_violation == 0) {
      rep.first_violation = n;
      rep.pass = false;
    }
    if (n == n_max) {
      rep.lhs_at_n_max = lhs;
      rep.rhs_at_n_max = rhs;
    }
  }
  return rep;
}

}  // namespace polaron
