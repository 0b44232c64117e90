#pragma once

#include <cmath>
#include <functional>
#include <map>
#include <utility>
#include <vector>

#include "polaron/cluster.hpp"

namespace polaron::testing {

/// Gauss-Legendre nodes/weights on [0, 1] by Newton iteration on P_n.
inline void gauss_legendre_unit(int n, std::vector<double>& nodes,
                                std::vector<double>& weights) {
  nodes.resize(n);
  weights.resize(n);
  for (int i = 0; i < n; ++i) {
    double x = std::cos(M_PI * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = x;
      for (int k = 2; k <= n; ++k) {
        const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      dp = n * (x * p1 - p0) / (x * x - 1.0);
      const double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-15) break;
    }
    nodes[i] = 0.5 * (1.0 - x);  // mirror so nodes ascend
    weights[i] = 1.0 / ((1.0 - x * x) * dp * dp);
  }
}

/// Tensor-product quadrature of f over the open unit square.
inline double quad_unit_square(const std::function<double(double, double)>& f, int n = 48) {
  std::vector<double> x, w;
  gauss_legendre_unit(n, x, w);
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) total += w[i] * w[j] * f(x[i], x[j]);
  }
  return total;
}

inline ActivePeriod make_period(std::vector<std::pair<double, double>> intervals) {
  std::vector<LifeInterval> ivs;
  ivs.reserve(intervals.size());
  for (auto [s, t] : intervals) ivs.push_back({s, t});
  return ActivePeriod::from_intervals(std::move(ivs));
}

/// Inverse-CDF map of the per-interval envelope: p in (0,1) -> u.
inline double envelope_u(double p, double delta) {
  return p / (std::sqrt(delta) * std::sqrt(1.0 - p * p));
}

/// Joint (n, sigma*) histogram distance (half L1) at the given resolution.
class JointHistogram {
 public:
  explicit JointHistogram(double resolution = 0.1, int n_cap = 12, double span_cap = 20.0)
      : resolution_(resolution), n_cap_(n_cap), span_cap_(span_cap) {}

  void add(int n, double span) {
    const int nb = std::min(n, n_cap_);
    const int sb = static_cast<int>(std::min(span, span_cap_) / resolution_);
    ++counts_[{nb, sb}];
    ++total_;
  }

  static double distance(const JointHistogram& a, const JointHistogram& b) {
    double d = 0.0;
    auto it_a = a.counts_.begin();
    auto it_b = b.counts_.begin();
    while (it_a != a.counts_.end() || it_b != b.counts_.end()) {
      if (it_b == b.counts_.end() ||
          (it_a != a.counts_.end() && it_a->first < it_b->first)) {
        d += static_cast<double>(it_a->second) / a.total_;
        ++it_a;
      } else if (it_a == a.counts_.end() || it_b->first < it_a->first) {
        d += static_cast<double>(it_b->second) / b.total_;
        ++it_b;
      } else {
        d += std::abs(static_cast<double>(it_a->second) / a.total_ -
                      static_cast<double>(it_b->second) / b.total_);
        ++it_a;
        ++it_b;
      }
    }
    return 0.5 * d;
  }

 private:
  double resolution_;
  int n_cap_;
  double span_cap_;
  std::map<std::pair<int, int>, std::size_t> counts_;
  double total_ = 0.0;
};

}  // namespace polaron::testing
