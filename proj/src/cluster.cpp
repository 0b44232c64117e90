#include "polaron/cluster.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>

namespace polaron {

namespace {

std::atomic<std::uint64_t> g_tie_count{0};

double nudge_after(double t) {
  g_tie_count.fetch_add(1, std::memory_order_relaxed);
  return std::nextafter(t, std::numeric_limits<double>::infinity());
}

}  // namespace

std::uint64_t tie_perturbations() { return g_tie_count.load(std::memory_order_relaxed); }

void ActivePeriod::validate() const {
  const auto n = intervals.size();
  if (n == 0) throw std::invalid_argument("cluster has no intervals");
  if (jump_times.size() != 2 * n) {
    throw std::invalid_argument("jump count must be 2n-1 events after time 0");
  }
  if (population_at_jumps.size() != 2 * n) {
    throw std::invalid_argument("population sequence must match jump count");
  }
  if (jump_times.front() != 0.0) throw std::invalid_argument("first birth must be at 0");
  for (std::size_t j = 1; j < jump_times.size(); ++j) {
    if (!(jump_times[j] > jump_times[j - 1])) {
      throw std::invalid_argument("jump times must be strictly increasing");
    }
  }
  double prev_death = -std::numeric_limits<double>::infinity();
  for (const auto& iv : intervals) {
    if (!(iv.death > iv.birth)) throw std::invalid_argument("interval death <= birth");
    if (!(iv.death >= prev_death)) {
      throw std::invalid_argument("intervals must be sorted by death time");
    }
    prev_death = iv.death;
  }
  // Reconstruct the event sequence and the population path.
  std::vector<std::pair<double, int>> events;  // (+1 birth, -1 death)
  events.reserve(2 * n);
  for (const auto& iv : intervals) {
    events.emplace_back(iv.birth, +1);
    events.emplace_back(iv.death, -1);
  }
  std::sort(events.begin(), events.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first < b.first;
    return a.second > b.second;  // birth before death at equal times (cannot occur)
  });
  int pop = 0;
  for (std::size_t j = 0; j < events.size(); ++j) {
    if (events[j].first != jump_times[j]) {
      throw std::invalid_argument("jump times do not match interval endpoints");
    }
    pop += events[j].second;
    if (pop != population_at_jumps[j]) {
      throw std::invalid_argument("population path does not match intervals");
    }
    const bool last = (j + 1 == events.size());
    if (last ? pop != 0 : pop <= 0) {
      throw std::invalid_argument("population must stay positive until the final death");
    }
  }
}

ActivePeriod ActivePeriod::from_intervals(std::vector<LifeInterval> ivs) {
  if (ivs.empty()) throw std::invalid_argument("cluster has no intervals");
  std::sort(ivs.begin(), ivs.end(),
            [](const LifeInterval& a, const LifeInterval& b) { return a.death < b.death; });
  std::vector<std::pair<double, int>> events;
  events.reserve(2 * ivs.size());
  for (auto& iv : ivs) {
    events.emplace_back(iv.birth, +1);
    events.emplace_back(iv.death, -1);
  }
  std::sort(events.begin(), events.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first < b.first;
    return a.second > b.second;
  });
  // Break exact endpoint ties by one ulp so the jump skeleton is strict.
  for (std::size_t j = 1; j < events.size(); ++j) {
    if (events[j].first <= events[j - 1].first) {
      double t = nudge_after(events[j - 1].first);
      // Propagate into the owning interval so intervals and jumps agree.
      for (auto& iv : ivs) {
        if (events[j].second > 0 && iv.birth == events[j].first) {
          iv.birth = t;
          break;
        }
        if (events[j].second < 0 && iv.death == events[j].first) {
          iv.death = t;
          break;
        }
      }
      events[j].first = t;
    }
  }
  std::sort(ivs.begin(), ivs.end(),
            [](const LifeInterval& a, const LifeInterval& b) { return a.death < b.death; });
  ActivePeriod xi;
  xi.intervals = std::move(ivs);
  xi.jump_times.reserve(events.size());
  xi.population_at_jumps.reserve(events.size());
  int pop = 0;
  for (const auto& [t, d] : events) {
    pop += d;
    xi.jump_times.push_back(t);
    xi.population_at_jumps.push_back(pop);
  }
  xi.validate();
  return xi;
}

ActivePeriod sample_cluster(double alpha, Rng& rng, const ClusterOptions& opt) {
  if (!(alpha > 0.0)) throw std::invalid_argument("alpha must be positive");
  ActivePeriod xi;
  std::vector<double> alive{0.0};  // birth times of living individuals
  xi.jump_times.push_back(0.0);
  xi.population_at_jumps.push_back(1);
  std::size_t born = 1;
  double t = 0.0;
  while (!alive.empty()) {
    const auto n = static_cast<double>(alive.size());
    // Waiting time at population n is Exp(n + alpha); birth w.p. alpha/(n+alpha).
    t += rng.exponential(n + alpha);
    if (t <= xi.jump_times.back()) t = nudge_after(xi.jump_times.back());
    if (rng.uniform() * (n + alpha) < alpha) {
      alive.push_back(t);
      if (++born > opt.max_individuals) throw RunawayClusterError(alpha, born);
    } else {
      // All death clocks are rate 1 and memoryless, so the casualty is uniform.
      const auto idx = static_cast<std::size_t>(rng.uniform_index(alive.size()));
      xi.intervals.push_back({alive[idx], t});
      alive[idx] = alive.back();
      alive.pop_back();
    }
    xi.jump_times.push_back(t);
    xi.population_at_jumps.push_back(static_cast<int>(alive.size()));
  }
  // Deaths were recorded chronologically, so intervals are death-sorted already.
  return xi;
}

ActivePeriod sample_cluster_terminal(double alpha, double remaining, Rng& rng,
                                     const ClusterOptions& opt) {
  if (!(alpha > 0.0)) throw std::invalid_argument("alpha must be positive");
  if (!(remaining > 0.0)) throw std::invalid_argument("remaining time must be positive");
  const double R = remaining;
  ActivePeriod xi;
  std::vector<double> alive{0.0};
  xi.jump_times.push_back(0.0);
  xi.population_at_jumps.push_back(1);
  std::size_t born = 1;
  double t = 0.0;
  std::size_t iterations = 0;
  const std::size_t max_iterations = 64 * opt.max_individuals + 1024;
  while (!alive.empty()) {
    if (++iterations > max_iterations) throw RunawayClusterError(alpha, born);
    const auto n = static_cast<double>(alive.size());
    // The per-individual death rate 1/(1-e^{-(R-t)}) grows towards the
    // horizon; dominate it by its value at the window end t_end and thin.
    const double window_end = t + 0.5 * (R - t);
    const double d_end = 1.0 / -std::expm1(-(R - window_end));
    const double envelope = alpha + n * d_end;
    const double w = rng.exponential(envelope);
    if (t + w >= window_end) {
      t = window_end;
      continue;
    }
    t += w;
    const double birth_rate = alpha * -std::expm1(-(R - t));
    const double death_rate = 1.0 / -std::expm1(-(R - t));
    const double x = rng.uniform() * envelope;
    if (x < birth_rate) {
      if (t <= xi.jump_times.back()) t = nudge_after(xi.jump_times.back());
      alive.push_back(t);
      if (++born > opt.max_individuals) throw RunawayClusterError(alpha, born);
    } else if (x < birth_rate + n * death_rate) {
      if (t <= xi.jump_times.back()) t = nudge_after(xi.jump_times.back());
      const auto idx = static_cast<std::size_t>(rng.uniform_index(alive.size()));
      xi.intervals.push_back({alive[idx], t});
      alive[idx] = alive.back();
      alive.pop_back();
    } else {
      continue;  // thinned candidate
    }
    xi.jump_times.push_back(t);
    xi.population_at_jumps.push_back(static_cast<int>(alive.size()));
  }
  return xi;
}

ClusterStats cluster_stats(const ActivePeriod& xi) {
  xi.validate();
  ClusterStats s;
  s.n = xi.n();
  s.sigma_star = xi.sigma_star();
  s.cell_lengths.reserve(xi.jump_times.size() - 1);
  for (std::size_t r = 1; r < xi.jump_times.size(); ++r) {
    s.cell_lengths.push_back(xi.jump_times[r] - xi.jump_times[r - 1]);
  }
  s.taus.reserve(xi.intervals.size());
  for (const auto& iv : xi.intervals) s.taus.push_back(iv.lifetime());
  // Death jumps in increasing death order; deltas pair with taus index-wise.
  s.deltas.reserve(xi.intervals.size());
  for (std::size_t j = 1; j < xi.jump_times.size(); ++j) {
    if (xi.population_at_jumps[j] < xi.population_at_jumps[j - 1]) {
      s.deltas.push_back(xi.jump_times[j] - xi.jump_times[j - 1]);
    }
  }
  return s;
}

}  // namespace polaron
