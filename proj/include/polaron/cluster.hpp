#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "polaron/rng.hpp"

namespace polaron {

/// One individual's lifetime. The first individual of a cluster is born at 0.
struct LifeInterval {
  double birth = 0.0;
  double death = 0.0;
  double lifetime() const { return death - birth; }
};

/// A single active period: matched birth/death intervals plus the jump-time
/// skeleton. Canonical form keeps intervals sorted by death time, so entry i
/// of any per-interval vector (weights, lifetimes, death gaps) refers to the
/// i-th death. jump_times has 2n entries sigma_0 = 0 < ... < sigma_{2n-1},
/// and population_at_jumps[j] is the population just after sigma_j (1 at the
/// start, 0 exactly at the end).
struct ActivePeriod {
  std::vector<LifeInterval> intervals;
  std::vector<double> jump_times;
  std::vector<int> population_at_jumps;

  int n() const { return static_cast<int>(intervals.size()); }
  double sigma_star() const { return jump_times.back(); }

  /// Throws std::invalid_argument if any structural invariant is violated.
  void validate() const;

  /// Builds the canonical form from bare intervals (sorting, jump skeleton,
  /// populations). Exactly coincident endpoints are nudged by one ulp and
  /// counted via tie_perturbations(). Throws if the union is not one
  /// connected interval starting at population 1.
  static ActivePeriod from_intervals(std::vector<LifeInterval> intervals);
};

struct ClusterStats {
  int n = 0;
  double sigma_star = 0.0;
  std::vector<double> deltas;        // gap between each death and the previous jump
  std::vector<double> taus;          // lifetimes, death order
  std::vector<double> cell_lengths;  // 2n-1 jump-time cells
};

struct ClusterOptions {
  /// Abort threshold on the number of individuals; large couplings make the
  /// expected cluster size blow up like e^alpha.
  std::size_t max_individuals = 1'000'000;
};

class RunawayClusterError : public std::runtime_error {
 public:
  RunawayClusterError(double alpha, std::size_t count)
      : std::runtime_error("cluster exceeded " + std::to_string(count) +
                           " individuals at alpha=" + std::to_string(alpha) +
                           "; supercritical-like blowup"),
        alpha(alpha),
        count(count) {}
  double alpha;
  std::size_t count;
};

/// Free cluster law: birth rate alpha, per-individual death rate 1, started
/// from one individual at time 0, run to extinction.
ActivePeriod sample_cluster(double alpha, Rng& rng, const ClusterOptions& opt = {});

/// Terminal-time cluster law: birth rate alpha*(1 - e^{-(R-s)}) and
/// per-individual death rate 1/(1 - e^{-(R-t)}), R = time remaining at the
/// cluster start. The death rate diverges at R, so extinction happens before
/// the horizon with probability 1. Simulated by exact thinning against a
/// piecewise-constant dominating rate refreshed on a grid that halves the
/// remaining time (no discretization bias). An equivalent construction would
/// delete horizon-crossing intervals from the free interval picture; we keep
/// the rate description.
ActivePeriod sample_cluster_terminal(double alpha, double remaining, Rng& rng,
                                     const ClusterOptions& opt = {});

/// Deterministic extraction of (n, sigma*, deltas, taus, cells). Validates.
ClusterStats cluster_stats(const ActivePeriod& xi);

/// Process-wide count of one-ulp tie nudges (ties have probability zero under
/// continuous clocks; any hit is floating-point coincidence).
std::uint64_t tie_perturbations();

}  // namespace polaron
