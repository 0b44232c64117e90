#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "polaron/cluster.hpp"
#include "polaron/gaussian_cluster.hpp"

namespace polaron {

struct QEstimate {
  double estimate = 0.0;
  double std_error = 0.0;
  double log_mean = 0.0;  // log of the estimate; finite even when it overflows
  std::size_t n_used = 0;
  bool diverged = false;
  bool heavy_tail = false;
};

struct QOptions {
  std::size_t u_draws = 1;
  /// Flag divergence once the running estimate exceeds this.
  double divergence_threshold = 10.0;
  /// Stop sampling as soon as the flag trips (the estimate is already ruled
  /// out as a value; at large coupling each extra cluster costs an e^alpha
  /// sized factorization).
  bool stop_on_divergence = true;
  std::size_t min_before_divergence = 16;
  double heavy_tail_top_fraction = 0.01;
  double heavy_tail_share = 0.5;
  ClusterOptions cluster;
};

/// Monte Carlo estimate of q(lambda) = (alpha/(alpha+lambda)) *
/// E[e^{-lambda sigma*} F(xi)] over free clusters; the dormant-gap factor is
/// integrated analytically.
QEstimate estimate_q(double alpha, double lambda, std::size_t n_samples, Rng& rng,
                     const QOptions& opt = {});

/// Estimate of L(lambda) = E[(sigma* + gap) e^{-lambda(sigma*+gap)} F(xi)];
/// the gap moments are handled in closed form (Exp(alpha) tilted by
/// e^{-lambda gap}).
QEstimate estimate_L(double alpha, double lambda, std::size_t n_samples, Rng& rng,
                     const QOptions& opt = {});

/// Common-random-number cluster pool: a fixed set of (sigma*, log F-hat)
/// pairs reused across lambda, so q-hat(lambda) is deterministic and exactly
/// non-increasing in lambda. Pool entries use derived streams, so builds are
/// reproducible for any thread count.
class ClusterPool {
 public:
  ClusterPool(double alpha, std::uint64_t seed, std::size_t size, std::size_t u_draws = 1,
              unsigned threads = 1, const ClusterOptions& copt = {});

  void grow(std::size_t new_size, unsigned threads = 1);

  double alpha() const { return alpha_; }
  std::size_t size() const { return sigma_.size(); }
  std::span<const double> sigma_stars() const { return sigma_; }
  std::span<const double> log_f() const { return log_f_; }

  struct Eval {
    double value = 0.0;
    double se = 0.0;
    bool heavy_tail = false;
  };
  Eval q_hat(double lambda) const;
  Eval l_hat(double lambda) const;

 private:
  double alpha_;
  std::uint64_t seed_;
  std::size_t u_draws_;
  ClusterOptions copt_;
  std::vector<double> sigma_;
  std::vector<double> log_f_;
};

struct TiltSolution {
  double alpha = 0.0;
  double lambda = 0.0;
  double q = 0.0;
  double q_se = 0.0;
  double L = 0.0;
  double L_se = 0.0;
  std::size_t n_samples = 0;
  std::uint64_t seed = 0;
  int bisections = 0;
  bool heavy_tail = false;
};

struct SolveOptions {
  std::size_t initial_pool = 1 << 15;
  std::size_t u_draws = 1;
  unsigned threads = 1;
  double bracket_pad = 10.0;
  /// Nonzero: replace the default upper bracket 3 sqrt(2) alpha^{3/2} + pad.
  double bracket_high = 0.0;
  ClusterOptions cluster;
};

class NoBracketError : public std::runtime_error {
 public:
  NoBracketError(double q_low, double q_high, std::string what)
      : std::runtime_error(std::move(what)), q_low(q_low), q_high(q_high) {}
  double q_low;
  double q_high;
};

/// Solves q(lambda) = 1 by bisection on a common-random-number pool over
/// [0, 3 sqrt(2) alpha^{3/2} + pad]. The pool doubles until the 3-sigma CI at
/// the root is below tol or max_samples is reached.
TiltSolution solve_lambda(double alpha, double tol, std::size_t max_samples,
                          std::uint64_t seed, const SolveOptions& opt = {});

struct LyapunovReport {
  bool pass = false;
  int first_violation = 0;  // 0 when none
  double max_lhs = 0.0;
  double bound = 0.0;
  double lambda = 0.0;
};

/// Deterministic check of the terminal-tilt drift inequality
/// (alpha/(alpha+lambda)) (n+alpha)/sqrt(n+alpha+lambda) (Pu)(n)/u(n) <= 1/sqrt(2)
/// with u(n) = c2^n sqrt(n!), c2 = 1/sqrt(alpha), lambda = 3 sqrt(2) alpha^{3/2}.
LyapunovReport lyapunov_check_terminal(double alpha, int n_max);

struct DriftReport {
  bool pass = false;
  int first_violation = 0;
  double min_margin = 0.0;   // min over n of lhs - rhs
  double c1_largest = 0.0;   // largest c with log(u/Pu)(n) >= c + 0.5 log(n+alpha)
  double lhs_at_n_max = 0.0;
  double rhs_at_n_max = 0.0;
};

/// Deterministic check of the free-process drift inequality
/// log(u/Pu)(n) >= -0.5 log(alpha) - log 3 + 0.5 log(n+alpha) with
/// u(n) = alpha^{-n/2} sqrt(n!). Also reports the largest constant c such
/// that log(u/Pu)(n) >= c + 0.5 log(n+alpha) holds up to n_max.
DriftReport drift_check_free(double alpha, int n_max);

}  // namespace polaron
