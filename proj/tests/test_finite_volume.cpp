#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "doctest.h"
#include "polaron/finite_volume.hpp"
#include "polaron/stats.hpp"
#include "polaron/tilting.hpp"
#include "test_util.hpp"

using namespace polaron;

TEST_SUITE_BEGIN("finite_volume");

namespace {

/// Brute-force clustering oracle: O(N^2) union-find on pairwise overlap.
std::vector<std::vector<int>> brute_force_clusters(const std::vector<LifeInterval>& ivs) {
  const int n = static_cast<int>(ivs.size());
  std::vector<int> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  std::function<int(int)> find = [&](int x) {
    return parent[x] == x ? x : parent[x] = find(parent[x]);
  };
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      if (std::min(ivs[i].death, ivs[j].death) > std::max(ivs[i].birth, ivs[j].birth)) {
        parent[find(i)] = find(j);
      }
    }
  }
  std::map<int, std::vector<int>> groups;
  for (int i = 0; i < n; ++i) groups[find(i)].push_back(i);
  std::vector<std::vector<int>> out;
  for (auto& [root, members] : groups) out.push_back(members);
  std::sort(out.begin(), out.end(), [&](const auto& a, const auto& b) {
    double ma = ivs[a.front()].birth;
    for (int i : a) ma = std::min(ma, ivs[i].birth);
    double mb = ivs[b.front()].birth;
    for (int i : b) mb = std::min(mb, ivs[i].birth);
    return ma < mb;
  });
  return out;
}

}  // namespace

TEST_CASE("interval count matches the closed-form intensity mass") {
  const double alpha = 1.0, horizon = 1.0;
  CHECK(poisson_config_mean_count(alpha, horizon) ==
        doctest::Approx(1.0 + std::exp(-2.0)).epsilon(1e-12));
  Rng rng(151);
  std::vector<double> counts;
  for (int i = 0; i < 50000; ++i) {
    const auto config = sample_poisson_config(alpha, horizon, rng);
    counts.push_back(static_cast<double>(config.n_intervals()));
    for (const auto& iv : config.intervals) {
      CHECK(iv.birth >= -horizon);
      CHECK(iv.death <= horizon);
      CHECK(iv.death > iv.birth);
    }
  }
  const auto ms = mean_se(counts);
  CHECK(std::abs(ms.mean - poisson_config_mean_count(alpha, horizon)) < 3.0 * ms.se);
}

TEST_CASE("vanishing horizon produces almost surely empty configurations") {
  Rng rng(157);
  std::size_t total = 0;
  for (int i = 0; i < 10000; ++i) total += sample_poisson_config(2.0, 1e-3, rng).n_intervals();
  CHECK(total <= 3);  // Poisson mean ~ 2e-2 over all draws
}

TEST_CASE("sweep clustering agrees exactly with the quadratic oracle") {
  Rng rng(163);
  for (int trial = 0; trial < 10000; ++trial) {
    const int n = 1 + static_cast<int>(rng.uniform_index(8));
    std::vector<LifeInterval> ivs;
    for (int i = 0; i < n; ++i) {
      const double s = -2.0 + 4.0 * rng.uniform();
      ivs.push_back({s, s + 2.0 * rng.uniform_pos()});
    }
    const auto config = make_poisson_config(4.0, ivs);
    const auto oracle = brute_force_clusters(ivs);
    REQUIRE(config.clusters.size() == oracle.size());
    for (std::size_t r = 0; r < oracle.size(); ++r) {
      CHECK(config.clusters[r].n() == static_cast<int>(oracle[r].size()));
      double earliest = ivs[oracle[r].front()].birth;
      for (int i : oracle[r]) earliest = std::min(earliest, ivs[i].birth);
      CHECK(config.cluster_offsets[r] == doctest::Approx(earliest));
    }
  }
}

TEST_CASE("log_weight: empty product, single-interval closed form, label invariance") {
  const auto empty = make_poisson_config(1.0, {});
  CHECK(log_weight(empty, {}) == 0.0);

  const double tau = 0.8;
  auto single = make_poisson_config(1.0, {{-0.2, -0.2 + tau}});
  Rng rng(167);
  const auto stats = cluster_stats(single.clusters[0]);
  std::vector<EnvelopeDraw> draws{draw_envelope(single.clusters[0], stats, rng)};
  CHECK(log_weight(single, draws) ==
        doctest::Approx(std::log(std::sqrt(2.0 / M_PI) / std::sqrt(tau))).epsilon(1e-12));

  // Relabeling intervals inside a cluster leaves the canonical clusters (and
  // hence the weight at fixed u-draws) unchanged.
  std::vector<LifeInterval> ivs{{-1.0, 0.2}, {-0.5, 0.7}, {0.0, 1.0}};
  auto a = make_poisson_config(1.5, ivs);
  std::reverse(ivs.begin(), ivs.end());
  auto b = make_poisson_config(1.5, ivs);
  REQUIRE(a.clusters.size() == 1);
  REQUIRE(b.clusters.size() == 1);
  CHECK(a.clusters[0].jump_times == b.clusters[0].jump_times);
  Rng r1(171), r2(171);
  std::vector<EnvelopeDraw> da{draw_envelope(a.clusters[0], cluster_stats(a.clusters[0]), r1)};
  std::vector<EnvelopeDraw> db{draw_envelope(b.clusters[0], cluster_stats(b.clusters[0]), r2)};
  CHECK(log_weight(a, da) == doctest::Approx(log_weight(b, db)).epsilon(1e-12));
}

TEST_CASE("free Brownian limit is recovered exactly at alpha = 0") {
  const double horizon = 2.0;
  const SnisEstimate est = estimate_finite_T(0.0, horizon, SecondMoment{-horizon, horizon},
                                             2000, 173, 2);
  CHECK(est.estimate == doctest::Approx(2.0 * horizon).epsilon(1e-12));
  CHECK(est.std_error == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(est.ess == doctest::Approx(2000.0).epsilon(1e-9));

  const SnisEstimate prob = estimate_finite_T(
      0.0, horizon, IntervalProbability{-horizon, horizon, -1.0, 1.0}, 500, 175, 2);
  const double sd = std::sqrt(2.0 * horizon);
  CHECK(prob.estimate ==
        doctest::Approx(normal_cdf(1.0 / sd) - normal_cdf(-1.0 / sd)).epsilon(1e-12));

  // Increment products: overlapping windows give the overlap length, disjoint
  // windows vanish.
  const SnisEstimate cov = estimate_finite_T(
      0.0, horizon, IncrementProduct{-1.0, 1.0, 0.0, 2.0}, 500, 177, 2);
  CHECK(cov.estimate == doctest::Approx(1.0).epsilon(1e-12));
  const SnisEstimate disjoint = estimate_finite_T(
      0.0, horizon, IncrementProduct{-2.0, -1.0, 1.0, 2.0}, 500, 179, 2);
  CHECK(disjoint.estimate == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("attraction shrinks the window variance, never above the Brownian value") {
  const double horizon = 2.0;
  const SnisEstimate est = estimate_finite_T(0.5, horizon, SecondMoment{-horizon, horizon},
                                             20000, 181, 2);
  CHECK(est.bound_violations == 0);
  CHECK(est.max_inner <= 2.0 * horizon * (1.0 + 1e-12));
  CHECK(est.estimate <= 2.0 * horizon);
  CHECK(est.estimate + 3.0 * est.std_error < 2.0 * horizon);
  CHECK(!est.flagged);
}

TEST_CASE("per-configuration inner values respect domination directly") {
  Rng rng(191);
  for (int i = 0; i < 2000; ++i) {
    const auto config = sample_poisson_config(0.8, 1.5, rng);
    std::vector<WeightVector> weights;
    for (const auto& cluster : config.clusters) {
      weights.push_back(draw_envelope(cluster, cluster_stats(cluster), rng).u);
    }
    const double inner =
        inner_functional_value(config, weights, SecondMoment{-1.5, 1.5});
    CHECK(inner <= 3.0 * (1.0 + 1e-12));
    CHECK(inner > 0.0);
  }
}

TEST_CASE("terminal normalizer approaches (lambda+alpha)/alpha at the solved tilt") {
  const double alpha = 0.25, lambda = 0.107;  // root from the tilt solver
  const std::vector<double> remaining{2.0, 50.0};
  const auto table = estimate_zhat_convergence(alpha, lambda, remaining, 40000, 193, 2);
  REQUIRE(table.size() == 2);
  CHECK(table[0].deviation > table[1].deviation);
  CHECK(table[1].deviation < 0.02 * table[1].target + 3.0 * table[1].std_error);

  // lambda = 0 sanity: the same integrand as the q estimator at lambda = 0.
  const std::vector<double> far{50.0};
  const auto zero_table = estimate_zhat_convergence(0.5, 0.0, far, 40000, 197, 2);
  Rng rng(199);
  const QEstimate q0 = estimate_q(0.5, 0.0, 40000, rng);
  CHECK(std::abs(zero_table[0].estimate - q0.estimate) <
        3.0 * std::hypot(zero_table[0].std_error, q0.std_error));
}

TEST_SUITE_END();
