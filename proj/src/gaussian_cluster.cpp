#include "polaron/gaussian_cluster.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace polaron {

namespace {

constexpr double kLogSqrt2OverPi = -0.22579135264472741678;  // log sqrt(2/pi)
constexpr int kDenseIntervalLimit = 64;
constexpr int kDenseCellLimit = 128;
constexpr double kJitter = 1e-12;

double overlap_length(const LifeInterval& a, const LifeInterval& b) {
  return std::max(0.0, std::min(a.death, b.death) - std::max(a.birth, b.birth));
}

double dense_log_det_cholesky(Eigen::MatrixXd m) {
  Eigen::LLT<Eigen::MatrixXd> llt(m);
  if (llt.info() != Eigen::Success) {
    m.diagonal().array() += kJitter;
    llt.compute(m);
    if (llt.info() != Eigen::Success) {
      throw std::runtime_error("Cholesky failed after jitter retry");
    }
  }
  return 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
}

double sparse_log_det_cholesky(const Eigen::SparseMatrix<double>& m) {
  Eigen::SimplicialLLT<Eigen::SparseMatrix<double>> llt(m);
  if (llt.info() != Eigen::Success) {
    Eigen::SparseMatrix<double> jittered = m;
    Eigen::SparseMatrix<double> eye(m.rows(), m.cols());
    eye.setIdentity();
    jittered += kJitter * eye;
    llt.compute(jittered);
    if (llt.info() != Eigen::Success) {
      throw std::runtime_error("sparse Cholesky failed after jitter retry");
    }
  }
  const Eigen::SparseMatrix<double> l = llt.matrixL();
  double logdet = 0.0;
  for (int k = 0; k < l.rows(); ++k) logdet += std::log(l.coeff(k, k));
  return 2.0 * logdet;
}

}  // namespace

void validate_weights(const ActivePeriod& xi, const WeightVector& u) {
  if (static_cast<int>(u.size()) != xi.n()) {
    throw std::invalid_argument("weight vector length must equal the interval count");
  }
  for (double w : u) {
    if (!(w > 0.0) || !std::isfinite(w)) {
      throw std::invalid_argument("weights must be strictly positive and finite");
    }
  }
}

Eigen::MatrixXd overlap_covariance(const ActivePeriod& xi, const WeightVector& u) {
  validate_weights(xi, u);
  const int n = xi.n();
  Eigen::MatrixXd c(n, n);
  for (int i = 0; i < n; ++i) {
    for (int k = i; k < n; ++k) {
      const double v = u[i] * u[k] * overlap_length(xi.intervals[i], xi.intervals[k]);
      c(i, k) = v;
      c(k, i) = v;
    }
  }
  return c;
}

double log_det_i_plus_c(const ActivePeriod& xi, const WeightVector& u) {
  validate_weights(xi, u);
  const int n = xi.n();
  if (n <= kDenseIntervalLimit) {
    Eigen::MatrixXd m = overlap_covariance(xi, u);
    m.diagonal().array() += 1.0;
    return dense_log_det_cholesky(std::move(m));
  }
  // Large clusters: only overlapping pairs contribute. Sorting by birth time
  // makes each row's overlap set contiguous, so the factor stays sparse.
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    return xi.intervals[a].birth < xi.intervals[b].birth;
  });
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(static_cast<std::size_t>(8) * n);
  for (int a = 0; a < n; ++a) {
    const auto& ia = xi.intervals[order[a]];
    trips.emplace_back(a, a, 1.0 + u[order[a]] * u[order[a]] * ia.lifetime());
    for (int b = a + 1; b < n; ++b) {
      const auto& ib = xi.intervals[order[b]];
      if (ib.birth >= ia.death) break;
      const double v = u[order[a]] * u[order[b]] * overlap_length(ia, ib);
      trips.emplace_back(a, b, v);
      trips.emplace_back(b, a, v);
    }
  }
  Eigen::SparseMatrix<double> m(n, n);
  m.setFromTriplets(trips.begin(), trips.end());
  return sparse_log_det_cholesky(m);
}

double log_phi(const ActivePeriod& xi, const WeightVector& u) {
  return -1.5 * log_det_i_plus_c(xi, u);
}

double phi(const ActivePeriod& xi, const WeightVector& u) { return std::exp(log_phi(xi, u)); }

std::pair<double, double> log_phi_bounds(const ActivePeriod& xi, const WeightVector& u) {
  validate_weights(xi, u);
  const ClusterStats s = cluster_stats(xi);
  double lo = 0.0, hi = 0.0;
  for (int i = 0; i < s.n; ++i) {
    lo += std::log1p(u[i] * u[i] * s.taus[i]);
    hi += std::log1p(u[i] * u[i] * s.deltas[i]);
  }
  return {-1.5 * lo, -1.5 * hi};
}

std::pair<double, double> phi_bounds(const ActivePeriod& xi, const WeightVector& u) {
  auto [lo, hi] = log_phi_bounds(xi, u);
  return {std::exp(lo), std::exp(hi)};
}

Eigen::MatrixXd cell_precision(const ActivePeriod& xi, const WeightVector& u) {
  validate_weights(xi, u);
  const ClusterGaussian g(xi, u);
  // Re-assemble densely from the same grid definition.
  const auto& len = g.cell_lengths();
  const int m = g.cells();
  Eigen::MatrixXd p = Eigen::MatrixXd::Zero(m, m);
  for (int r = 0; r < m; ++r) p(r, r) = 1.0 / len[r];
  const auto& bounds = g.boundaries();
  for (int i = 0; i < xi.n(); ++i) {
    const auto& iv = xi.intervals[i];
    for (int r = 0; r < m; ++r) {
      const double mid_r = 0.5 * (bounds[r] + bounds[r + 1]);
      if (mid_r < iv.birth || mid_r > iv.death) continue;
      for (int q = r; q < m; ++q) {
        const double mid_q = 0.5 * (bounds[q] + bounds[q + 1]);
        if (mid_q < iv.birth || mid_q > iv.death) continue;
        p(r, q) += u[i] * u[i];
        if (q != r) p(q, r) += u[i] * u[i];
      }
    }
  }
  return p;
}

ClusterGaussian::ClusterGaussian(const ActivePeriod& xi, const WeightVector& u,
                                 std::span<const double> extra_times) {
  validate_weights(xi, u);
  const double span = xi.sigma_star();
  bounds_ = xi.jump_times;
  for (double t : extra_times) {
    if (t < 0.0 || t > span) {
      throw std::invalid_argument("refinement time outside the cluster span");
    }
    bounds_.push_back(t);
  }
  std::sort(bounds_.begin(), bounds_.end());
  bounds_.erase(std::unique(bounds_.begin(), bounds_.end()), bounds_.end());
  const int m = static_cast<int>(bounds_.size()) - 1;
  lengths_.resize(m);
  for (int r = 0; r < m; ++r) {
    lengths_[r] = bounds_[r + 1] - bounds_[r];
    if (!(lengths_[r] > 0.0)) throw std::invalid_argument("zero-length cell");
  }
  // Membership of interval i is a contiguous run of cells.
  std::vector<std::pair<int, int>> spans(xi.n());
  for (int i = 0; i < xi.n(); ++i) {
    const auto& iv = xi.intervals[i];
    const auto first =
        std::lower_bound(bounds_.begin(), bounds_.end(), iv.birth) - bounds_.begin();
    const auto last =
        std::lower_bound(bounds_.begin(), bounds_.end(), iv.death) - bounds_.begin();
    if (bounds_[first] != iv.birth || bounds_[last] != iv.death) {
      throw std::logic_error("interval endpoints must lie on cell boundaries");
    }
    spans[i] = {static_cast<int>(first), static_cast<int>(last) - 1};
  }
  dense_ = m <= kDenseCellLimit;
  if (dense_) {
    Eigen::MatrixXd p = Eigen::MatrixXd::Zero(m, m);
    for (int r = 0; r < m; ++r) p(r, r) = 1.0 / lengths_[r];
    for (int i = 0; i < xi.n(); ++i) {
      const double w2 = u[i] * u[i];
      for (int r = spans[i].first; r <= spans[i].second; ++r) {
        for (int q = spans[i].first; q <= spans[i].second; ++q) p(r, q) += w2;
      }
    }
    dense_llt_ = std::make_unique<Eigen::LLT<Eigen::MatrixXd>>(p);
    if (dense_llt_->info() != Eigen::Success) {
      p.diagonal().array() += kJitter;
      dense_llt_->compute(p);
      if (dense_llt_->info() != Eigen::Success) {
        throw std::runtime_error("cell precision Cholesky failed after jitter retry");
      }
    }
    logdet_p_ = 2.0 * dense_llt_->matrixLLT().diagonal().array().log().sum();
  } else {
    std::vector<Eigen::Triplet<double>> trips;
    for (int r = 0; r < m; ++r) trips.emplace_back(r, r, 1.0 / lengths_[r]);
    for (int i = 0; i < xi.n(); ++i) {
      const double w2 = u[i] * u[i];
      for (int r = spans[i].first; r <= spans[i].second; ++r) {
        for (int q = spans[i].first; q <= spans[i].second; ++q) trips.emplace_back(r, q, w2);
      }
    }
    Eigen::SparseMatrix<double> p(m, m);
    p.setFromTriplets(trips.begin(), trips.end());
    sparse_llt_ = std::make_unique<SparseLlt>();
    sparse_llt_->compute(p);
    if (sparse_llt_->info() != Eigen::Success) {
      Eigen::SparseMatrix<double> eye(m, m);
      eye.setIdentity();
      p += kJitter * eye;
      sparse_llt_->compute(p);
      if (sparse_llt_->info() != Eigen::Success) {
        throw std::runtime_error("cell precision Cholesky failed after jitter retry");
      }
    }
    const Eigen::SparseMatrix<double> l = sparse_llt_->matrixL();
    double logdet = 0.0;
    for (int k = 0; k < m; ++k) logdet += std::log(l.coeff(k, k));
    logdet_p_ = 2.0 * logdet;
  }
}

double ClusterGaussian::log_det_i_plus_c() const {
  double s = logdet_p_;
  for (double len : lengths_) s += std::log(len);
  return s;
}

Eigen::VectorXd ClusterGaussian::solve(const Eigen::VectorXd& b) const {
  return dense_ ? dense_llt_->solve(b).eval() : sparse_llt_->solve(b).eval();
}

double ClusterGaussian::quadratic_inverse(const Eigen::VectorXd& a,
                                          const Eigen::VectorXd& b) const {
  return a.dot(solve(b));
}

Eigen::VectorXd ClusterGaussian::indicator(double a, double b) const {
  if (b < a) std::swap(a, b);
  Eigen::VectorXd v = Eigen::VectorXd::Zero(cells());
  for (int r = 0; r < cells(); ++r) {
    const double mid = 0.5 * (bounds_[r] + bounds_[r + 1]);
    if (mid > a && mid < b) v[r] = 1.0;
  }
  // Guard against endpoints that are not boundaries: the covered length must
  // match b - a exactly (up to roundoff).
  double covered = 0.0;
  for (int r = 0; r < cells(); ++r) covered += v[r] * lengths_[r];
  if (std::abs(covered - (b - a)) > 1e-9 * std::max(1.0, bounds_.back())) {
    throw std::invalid_argument("window endpoints must lie on cell boundaries");
  }
  return v;
}

double ClusterGaussian::window_variance(double a, double b) const {
  if (a == b) return 0.0;
  const Eigen::VectorXd v = indicator(a, b);
  return quadratic_inverse(v, v);
}

double ClusterGaussian::window_covariance(double a1, double b1, double a2, double b2) const {
  if (a1 == b1 || a2 == b2) return 0.0;
  return quadratic_inverse(indicator(a1, b1), indicator(a2, b2));
}

double ClusterGaussian::total_increment_variance() const {
  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(cells());
  return quadratic_inverse(ones, ones);
}

Eigen::Matrix3Xd ClusterGaussian::sample_increments(Rng& rng) const {
  const int m = cells();
  Eigen::Matrix3Xd out(3, m);
  Eigen::VectorXd g(m);
  for (int coord = 0; coord < 3; ++coord) {
    for (int r = 0; r < m; ++r) g[r] = rng.normal();
    // z = L^{-T} g has covariance (L L^T)^{-1} = P^{-1}.
    if (dense_) {
      out.row(coord) = dense_llt_->matrixU().solve(g).transpose();
    } else {
      Eigen::VectorXd z = sparse_llt_->matrixU().solve(g);
      out.row(coord) = z.transpose();
    }
  }
  return out;
}

double increment_variance(const ActivePeriod& xi, const WeightVector& u) {
  return ClusterGaussian(xi, u).total_increment_variance();
}

Eigen::Matrix3Xd sample_increments(const ActivePeriod& xi, const WeightVector& u, Rng& rng) {
  return ClusterGaussian(xi, u).sample_increments(rng);
}

Eigen::Matrix3Xd refine_path(const ActivePeriod& xi, const Eigen::Matrix3Xd& cell_increments,
                             std::span<const double> times, Rng& rng) {
  const auto& jumps = xi.jump_times;
  const int m = static_cast<int>(jumps.size()) - 1;
  if (cell_increments.cols() != m) {
    throw std::invalid_argument("cell increment count must match the jump grid");
  }
  if (times.size() < 2) throw std::invalid_argument("need at least two times");
  const double span = xi.sigma_star();
  for (std::size_t k = 0; k < times.size(); ++k) {
    if (times[k] < 0.0 || times[k] > span) {
      throw std::invalid_argument("requested time outside the cluster span");
    }
    if (k > 0 && !(times[k] > times[k - 1])) {
      throw std::invalid_argument("times must be strictly increasing");
    }
  }
  // Elementary grid: jump boundaries plus requested times.
  std::vector<double> grid(jumps.begin(), jumps.end());
  grid.insert(grid.end(), times.begin(), times.end());
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
  // Sample every elementary segment: inside a cell the conditional law given
  // the cell total is a Brownian bridge, applied sequentially.
  Eigen::Matrix3Xd seg(3, grid.size() - 1);
  std::size_t gpos = 0;
  for (int r = 0; r < m; ++r) {
    double remaining_len = jumps[r + 1] - jumps[r];
    Eigen::Vector3d remaining_total = cell_increments.col(r);
    while (grid[gpos + 1] < jumps[r + 1]) {
      const double len = grid[gpos + 1] - grid[gpos];
      Eigen::Vector3d draw;
      const double var = len * (remaining_len - len) / remaining_len;
      const double sd = std::sqrt(std::max(0.0, var));
      for (int c = 0; c < 3; ++c) {
        draw[c] = remaining_total[c] * (len / remaining_len) + sd * rng.normal();
      }
      seg.col(gpos) = draw;
      remaining_total -= draw;
      remaining_len -= len;
      ++gpos;
    }
    seg.col(gpos) = remaining_total;  // last segment of the cell, no freedom left
    ++gpos;
  }
  // Aggregate elementary segments between consecutive requested times.
  Eigen::Matrix3Xd out = Eigen::Matrix3Xd::Zero(3, times.size() - 1);
  std::size_t k = 0;
  Eigen::Vector3d acc = Eigen::Vector3d::Zero();
  bool inside = false;
  for (std::size_t g = 0; g + 1 < grid.size() && k + 1 < times.size(); ++g) {
    if (grid[g] == times[k]) inside = true;
    if (inside) acc += seg.col(g);
    if (grid[g + 1] == times[k + 1]) {
      out.col(k) = acc;
      acc.setZero();
      ++k;
    }
  }
  return out;
}

EnvelopeDraw draw_envelope(const ActivePeriod& xi, const ClusterStats& stats, Rng& rng) {
  EnvelopeDraw d;
  d.u.resize(stats.n);
  for (int i = 0; i < stats.n; ++i) {
    double p;
    do {
      p = rng.uniform();
    } while (p == 0.0);
    d.u[i] = p / (std::sqrt(stats.deltas[i]) * std::sqrt(1.0 - p * p));
  }
  if (stats.n == 1) {
    d.log_ratio = 0.0;  // single interval: the envelope is exact
    return d;
  }
  double log_upper = 0.0;
  for (int i = 0; i < stats.n; ++i) {
    log_upper += -1.5 * std::log1p(d.u[i] * d.u[i] * stats.deltas[i]);
  }
  d.log_ratio = log_phi(xi, d.u) - log_upper;
  if (d.log_ratio > 0.0) d.log_ratio = std::min(d.log_ratio, 0.0);
  return d;
}

double log_f_upper_bound(const ClusterStats& stats) {
  double s = stats.n * kLogSqrt2OverPi;
  for (double delta : stats.deltas) s -= 0.5 * std::log(delta);
  return s;
}

WeightVector sample_weights(const ActivePeriod& xi, Rng& rng, const WeightSamplerOptions& opt) {
  const ClusterStats stats = cluster_stats(xi);
  for (std::size_t attempt = 0; attempt < opt.max_proposals; ++attempt) {
    EnvelopeDraw d = draw_envelope(xi, stats, rng);
    if (d.log_ratio >= 0.0 || std::log(rng.uniform_pos()) < d.log_ratio) {
      return std::move(d.u);
    }
  }
  throw std::runtime_error("weight rejection sampler exhausted " +
                           std::to_string(opt.max_proposals) + " proposals (n=" +
                           std::to_string(stats.n) + ", sigma*=" +
                           std::to_string(stats.sigma_star) + ")");
}

FEstimate estimate_F(const ActivePeriod& xi, std::size_t n_samples, Rng& rng) {
  if (n_samples < 2) throw std::invalid_argument("estimate_F needs n_samples >= 2");
  const ClusterStats stats = cluster_stats(xi);
  const double log_upper = log_f_upper_bound(stats);
  double sum = 0.0, sum_sq = 0.0;
  for (std::size_t k = 0; k < n_samples; ++k) {
    const double w = std::exp(draw_envelope(xi, stats, rng).log_ratio);
    sum += w;
    sum_sq += w * w;
  }
  const auto n = static_cast<double>(n_samples);
  const double mean = sum / n;
  const double var = std::max(0.0, (sum_sq - n * mean * mean) / (n - 1.0));
  FEstimate out;
  out.n_samples = n_samples;
  out.log_estimate = log_upper + std::log(mean);
  out.estimate = std::exp(out.log_estimate);
  out.std_error = std::exp(log_upper) * std::sqrt(var / n);
  return out;
}

double log_f_hat(const ActivePeriod& xi, const ClusterStats& stats, std::size_t k, Rng& rng) {
  double sum = 0.0;
  for (std::size_t j = 0; j < k; ++j) sum += std::exp(draw_envelope(xi, stats, rng).log_ratio);
  return log_f_upper_bound(stats) + std::log(sum / static_cast<double>(k));
}

}  // namespace polaron
