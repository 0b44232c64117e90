#include <cmath>
#include <vector>

#include "doctest.h"
#include "polaron/renewal.hpp"
#include "polaron/stats.hpp"
#include "test_util.hpp"

using namespace polaron;

TEST_SUITE_BEGIN("renewal");

namespace {
// Structural renewal properties hold for any tilt, so unit tests pin an
// arbitrary lambda; only the CLT variance range needs the solved root.
constexpr double kAlpha = 0.25;
constexpr double kLambda = 0.107;
}  // namespace

TEST_CASE("tilted gap: mean, lambda = 0 reduction, memorylessness") {
  Rng rng(71);
  std::vector<double> gaps;
  for (int i = 0; i < 100000; ++i) gaps.push_back(sample_tilted_gap(kAlpha, kLambda, rng).length);
  const auto ms = mean_se(gaps);
  CHECK(std::abs(ms.mean - 1.0 / (kAlpha + kLambda)) < 3.0 * ms.se);

  std::vector<double> plain;
  for (int i = 0; i < 100000; ++i) plain.push_back(sample_tilted_gap(0.5, 0.0, rng).length);
  const auto ms0 = mean_se(plain);
  CHECK(std::abs(ms0.mean - 2.0) < 3.0 * ms0.se);

  // Conditional tail beyond c is again Exp(alpha + lambda).
  const double c = 1.0;
  std::vector<double> tail;
  for (double g : gaps) {
    if (g > c) tail.push_back(g - c);
  }
  const double ks = ks_distance_exponential(tail, kAlpha + kLambda);
  CHECK(ks < 1.63 / std::sqrt(static_cast<double>(tail.size())));  // 1% KS band
}

TEST_CASE("tilted cluster sampler: SIR frequencies match reweighting identities") {
  TiltedClusterSampler sampler(kAlpha, kLambda, 20000, 73, 2);
  Rng rng(79);

  // Two-estimator agreement for the tilted mean span: SNIS over the pool vs
  // the empirical mean over SIR draws.
  const std::size_t n_draws = 20000;
  std::vector<double> spans, singles;
  for (std::size_t i = 0; i < n_draws; ++i) {
    const std::size_t idx = sampler.draw_index(rng);
    spans.push_back(sampler.pool_cluster(idx).sigma_star());
    singles.push_back(sampler.pool_cluster(idx).n() == 1 ? 1.0 : 0.0);
  }
  const auto span_ms = mean_se(spans);
  CHECK(std::abs(span_ms.mean - sampler.mean_span()) <
        3.0 * std::hypot(span_ms.se, sampler.mean_span_se()));

  // Tilted frequency of single-interval clusters equals the weighted pool
  // frequency (reweighting identity).
  double weighted_single = 0.0;
  for (std::size_t j = 0; j < sampler.pool_size(); ++j) {
    if (sampler.pool_cluster(j).n() == 1) weighted_single += sampler.normalized_weights()[j];
  }
  const auto single_ms = mean_se(singles);
  CHECK(std::abs(single_ms.mean - weighted_single) < 3.0 * single_ms.se);

  // Drawn weight vectors sit in the conditional law: ratio in [0,1] re-check.
  for (int i = 0; i < 200; ++i) {
    const WeightedCluster wc = sampler.draw(rng);
    CHECK(wc.weights.size() == static_cast<std::size_t>(wc.cluster.n()));
    for (double u : wc.weights) CHECK(u > 0.0);
  }
}

TEST_CASE("unit-weight pool at lambda = 0 reduces to the free law") {
  TiltedClusterSampler sampler(1.0, 0.0, 50000, 83, 2, {}, /*unit_weights=*/true);
  Rng rng(89);
  polaron::testing::JointHistogram sir_hist, free_hist;
  for (int i = 0; i < 50000; ++i) {
    const std::size_t idx = sampler.draw_index(rng);
    sir_hist.add(sampler.pool_cluster(idx).n(), sampler.pool_cluster(idx).sigma_star());
    const ActivePeriod xi = sample_cluster(1.0, rng);
    free_hist.add(xi.n(), xi.sigma_star());
  }
  // Pool noise + fresh-sample noise + bootstrap resampling noise set the
  // floor near 0.04 at these counts.
  CHECK(polaron::testing::JointHistogram::distance(sir_hist, free_hist) < 0.07);
}

TEST_CASE("stationary window: alternation, tiling, occupancy, burn-in doubling") {
  TiltedClusterSampler sampler(kAlpha, kLambda, 20000, 97, 2);
  const double m2 = 1.0 / (kAlpha + kLambda);
  const double burn = default_burn_in(sampler.mean_span(), m2);
  Rng rng(101);
  const std::size_t n_windows = 4000;
  std::vector<double> occ, occ_double;
  for (std::size_t i = 0; i < n_windows; ++i) {
    const RenewalConfiguration config = sample_stationary_window(sampler, 25.0, burn, rng);
    config.validate();
    occ.push_back(config.occupancy());
    occ_double.push_back(
        sample_stationary_window(sampler, 25.0, 2.0 * burn, rng).occupancy());
  }
  const double m1 = sampler.mean_span();
  const double target = m1 / (m1 + m2);
  const auto ms = mean_se(occ);
  CHECK(std::abs(ms.mean - target) < 3.0 * std::hypot(ms.se, sampler.mean_span_se()));
  // Doubling the burn-in moves the estimate by less than one SE.
  const auto ms2 = mean_se(occ_double);
  CHECK(std::abs(ms.mean - ms2.mean) < std::hypot(ms.se, ms2.se));
}

TEST_CASE("path sampling: pure-Brownian window, bounds, independence across items") {
  Rng rng(103);
  // A window containing a single huge gap is plain Brownian motion.
  RenewalConfiguration gap_only;
  gap_only.window_lo = -4.0;
  gap_only.window_hi = 4.0;
  gap_only.items.push_back({-5.0, DormantGap{10.0}});
  gap_only.first_cut = gap_only.last_cut = true;
  std::vector<double> totals;
  const std::vector<double> times{-4.0, 4.0};
  for (int i = 0; i < 50000; ++i) {
    const PathSample path = sample_polaron_path(gap_only, times, rng);
    for (int c = 0; c < 3; ++c) totals.push_back(path.increments(c, 0));
  }
  const double var_hat = sample_variance(totals);
  CHECK(std::abs(var_hat - 8.0) < 3.0 * 8.0 * std::sqrt(2.0 / totals.size()));

  // Mixed window: disjoint-item increments are uncorrelated; cluster pieces
  // respect the span bound per draw.
  TiltedClusterSampler sampler(kAlpha, kLambda, 5000, 107, 2);
  const RenewalConfiguration config =
      sample_stationary_window(sampler, 6.0, 200.0, rng);
  std::vector<double> left, right;
  const std::vector<double> probe{-5.0, 0.0, 5.0};
  for (int i = 0; i < 20000; ++i) {
    const PathSample p = sample_polaron_path(config, probe, rng);
    left.push_back(p.increments(0, 0));
    right.push_back(p.increments(0, 1));
  }
  CHECK(std::abs(correlation(left, right)) < 3.0 / std::sqrt(20000.0));
}

TEST_CASE("sigma2: range, Rao-Blackwell identity against sampled paths") {
  const Sigma2Estimate est = estimate_sigma2(kAlpha, kLambda, 100000, 109, 2);
  CHECK(est.sigma2 > 0.0);
  CHECK(est.sigma2 < 1.0);
  CHECK(est.in_range);
  // Numerator is termwise dominated: within-cluster variance <= span.
  CHECK(est.gamma <= est.mean_span);

  // Ergodic cross-check at a modest window: empirical variance of the
  // rescaled increment agrees with the ratio estimator.
  TiltedClusterSampler sampler(kAlpha, kLambda, 20000, 113, 2);
  const double burn = default_burn_in(sampler.mean_span(), est.gap_variance);
  const auto increments = sample_rescaled_increments(sampler, 50.0, burn, 4000, 127, 2);
  std::vector<double> xs;
  xs.reserve(increments.size());
  for (const auto& v : increments) xs.push_back(v[0]);
  const double var_hat = sample_variance(xs);
  const double se = std::hypot(variance_se(xs), est.se);
  CHECK(std::abs(var_hat - est.sigma2) < 3.0 * se + 0.02);  // + O(cycle/A) boundary bias
}

TEST_CASE("cluster-length exponential moment is stable under the tilt") {
  TiltedClusterSampler sampler(kAlpha, kLambda, 40000, 131, 2);
  // Split-half agreement of E-hat[e^{a sigma*}] for a small positive a.
  const double a = 0.1;
  double first = 0.0, second = 0.0, w_first = 0.0, w_second = 0.0;
  const auto w = sampler.normalized_weights();
  for (std::size_t j = 0; j < sampler.pool_size(); ++j) {
    const double value = std::exp(a * sampler.pool_cluster(j).sigma_star());
    if (j % 2 == 0) {
      first += w[j] * value;
      w_first += w[j];
    } else {
      second += w[j] * value;
      w_second += w[j];
    }
  }
  first /= w_first;
  second /= w_second;
  CHECK(std::isfinite(first));
  CHECK(std::abs(first - second) / (0.5 * (first + second)) < 0.2);
}

TEST_CASE("mixing: coverage decay and vanishing cross-window correlation") {
  const std::vector<double> gaps{0.0, 0.25, 0.5, 0.75, 1.0};
  const MixingReport rep = estimate_mixing(kAlpha, kLambda, gaps, 20000, 137, 2, 10000);
  REQUIRE(rep.rows.size() == gaps.size());
  // f(0) is exactly the single-cluster coverage of a point, below occupancy.
  CHECK(rep.rows[0].f <= rep.occupancy + 3.0 * std::hypot(rep.rows[0].f_se, rep.occupancy_se));
  // Monotone non-increasing on the shared sample set, exact.
  for (std::size_t g = 1; g < rep.rows.size(); ++g) {
    CHECK(rep.rows[g].f <= rep.rows[g - 1].f);
  }
  CHECK(rep.decay_rate > 0.0);
  CHECK(rep.rate_positive);
  for (const auto& row : rep.rows) {
    CHECK(std::abs(row.corr) < 3.0 * row.corr_se);
  }
}

TEST_CASE("variance domination along the window") {
  TiltedClusterSampler sampler(kAlpha, kLambda, 10000, 139, 2);
  Rng rng(149);
  const double a = 10.0;
  std::vector<double> xs;
  for (int i = 0; i < 20000; ++i) {
    const RenewalConfiguration config = sample_stationary_window(sampler, a, 150.0, rng);
    const PathSample p = sample_polaron_path(config, std::vector<double>{-a, a}, rng);
    for (int c = 0; c < 3; ++c) xs.push_back(p.increments(c, 0));
  }
  const double var_hat = sample_variance(xs);
  CHECK(var_hat <= 2.0 * a * (1.0 + 3.0 * std::sqrt(2.0 / xs.size())));
}

TEST_SUITE_END();
