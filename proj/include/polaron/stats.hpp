#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

namespace polaron {

struct MeanSe {
  double mean = 0.0;
  double se = 0.0;
  std::size_t n = 0;
};

inline MeanSe mean_se(std::span<const double> xs) {
  MeanSe out;
  out.n = xs.size();
  if (out.n == 0) return out;
  double m = 0.0;
  for (double x : xs) m += x;
  m /= static_cast<double>(out.n);
  double ss = 0.0;
  for (double x : xs) ss += (x - m) * (x - m);
  out.mean = m;
  out.se = out.n > 1 ? std::sqrt(ss / (static_cast<double>(out.n) * (out.n - 1.0))) : 0.0;
  return out;
}

inline double log_sum_exp(std::span<const double> xs) {
  if (xs.empty()) return -std::numeric_limits<double>::infinity();
  double m = *std::max_element(xs.begin(), xs.end());
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double x : xs) s += std::exp(x - m);
  return m + std::log(s);
}

/// Streaming log-sum-exp; keeps a shifted accumulator so running means of
/// astronomically large terms stay representable.
class LogSumExp {
 public:
  void add(double log_x) {
    if (log_x == -std::numeric_limits<double>::infinity()) {
      ++n_;
      return;
    }
    if (log_x > shift_) {
      sum_ *= std::exp(shift_ - log_x);
      shift_ = log_x;
    }
    sum_ += std::exp(log_x - shift_);
    ++n_;
  }
  std::size_t count() const { return n_; }
  double log_sum() const {
    return sum_ > 0.0 ? shift_ + std::log(sum_) : -std::numeric_limits<double>::infinity();
  }
  double log_mean() const { return log_sum() - std::log(static_cast<double>(n_)); }

 private:
  double shift_ = -std::numeric_limits<double>::infinity();
  double sum_ = 0.0;
  std::size_t n_ = 0;
};

inline double sample_variance(std::span<const double> xs) {
  auto ms = mean_se(xs);
  return ms.se * ms.se * static_cast<double>(xs.size());
}

/// Excess-free kurtosis m4/m2^2 (Gaussian -> 3).
inline double sample_kurtosis(std::span<const double> xs) {
  if (xs.size() < 4) throw std::invalid_argument("kurtosis needs >= 4 samples");
  double m = mean_se(xs).mean;
  double m2 = 0.0, m4 = 0.0;
  for (double x : xs) {
    double d = x - m;
    m2 += d * d;
    m4 += d * d * d * d;
  }
  m2 /= static_cast<double>(xs.size());
  m4 /= static_cast<double>(xs.size());
  return m4 / (m2 * m2);
}

/// SE of the sample variance from the fourth moment (no normality assumed).
inline double variance_se(std::span<const double> xs) {
  double m = mean_se(xs).mean;
  double m2 = 0.0, m4 = 0.0;
  for (double x : xs) {
    double d = x - m;
    m2 += d * d;
    m4 += d * d * d * d;
  }
  auto n = static_cast<double>(xs.size());
  m2 /= n;
  m4 /= n;
  return std::sqrt(std::max(0.0, m4 - m2 * m2) / n);
}

inline double correlation(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size() || xs.size() < 2) {
    throw std::invalid_argument("correlation needs two equal-length samples");
  }
  double mx = mean_se(xs).mean, my = mean_se(ys).mean;
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxy += (xs[i] - mx) * (ys[i] - my);
    sxx += (xs[i] - mx) * (xs[i] - mx);
    syy += (ys[i] - my) * (ys[i] - my);
  }
  double denom = std::sqrt(sxx * syy);
  return denom > 0.0 ? sxy / denom : 0.0;
}

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

/// Integrated autocorrelation time with the usual self-consistent window
/// (stop once the window exceeds c times the running estimate).
inline double integrated_autocorr_time(std::span<const double> trace, double c = 6.0) {
  const std::size_t n = trace.size();
  if (n < 16) return 1.0;
  const double m = mean_se(trace).mean;
  double c0 = 0.0;
  for (double x : trace) c0 += (x - m) * (x - m);
  c0 /= static_cast<double>(n);
  if (c0 <= 0.0) return 1.0;
  double tau = 1.0;
  for (std::size_t k = 1; k < n / 2; ++k) {
    double ck = 0.0;
    for (std::size_t i = 0; i + k < n; ++i) ck += (trace[i] - m) * (trace[i + k] - m);
    ck /= static_cast<double>(n - k);
    tau += 2.0 * ck / c0;
    if (static_cast<double>(k) >= c * tau) break;
  }
  return std::max(1.0, tau);
}

/// Batch-means SE for a correlated trace.
inline double batch_means_se(std::span<const double> trace, std::size_t n_batches = 50) {
  const std::size_t n = trace.size();
  if (n < 2 * n_batches) n_batches = std::max<std::size_t>(2, n / 2);
  const std::size_t b = n / n_batches;
  std::vector<double> means;
  means.reserve(n_batches);
  for (std::size_t j = 0; j < n_batches; ++j) {
    double s = 0.0;
    for (std::size_t i = j * b; i < (j + 1) * b; ++i) s += trace[i];
    means.push_back(s / static_cast<double>(b));
  }
  return mean_se(means).se;
}

/// One-sample Kolmogorov distance against Exp(rate).
inline double ks_distance_exponential(std::vector<double> xs, double rate) {
  std::sort(xs.begin(), xs.end());
  const auto n = static_cast<double>(xs.size());
  double d = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    double f = 1.0 - std::exp(-rate * xs[i]);
    d = std::max(d, std::abs(f - static_cast<double>(i) / n));
    d = std::max(d, std::abs(f - static_cast<double>(i + 1) / n));
  }
  return d;
}

}  // namespace polaron
