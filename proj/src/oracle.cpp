#include "polaron/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "polaron/stats.hpp"

namespace polaron {

namespace {
constexpr double kCollisionRadius = 1e-12;
constexpr double kCollisionCap = 1e12;
}  // namespace

GridPath sample_brownian_grid(double horizon, int m, Rng& rng) {
  if (m < 2) throw std::invalid_argument("need at least two cells");
  if (!(horizon > 0.0)) throw std::invalid_argument("horizon must be positive");
  GridPath path;
  path.horizon = horizon;
  path.increments.resize(3, m);
  const double sd = std::sqrt(2.0 * horizon / m);
  for (int c = 0; c < m; ++c) {
    for (int k = 0; k < 3; ++k) path.increments(k, c) = sd * rng.normal();
  }
  return path;
}

EnergyModel::EnergyModel(double alpha, double horizon, int m)
    : alpha_(alpha), horizon_(horizon), m_(m), dt_(2.0 * horizon / m) {
  if (m < 2) throw std::invalid_argument("need at least two cells");
  kernel_by_lag_.resize(m);
  for (int lag = 0; lag < m; ++lag) kernel_by_lag_[lag] = std::exp(-dt_ * lag);
}

double EnergyModel::energy(const GridPath& path) const {
  if (path.m() != m_ || path.horizon != horizon_) {
    throw std::invalid_argument("path grid does not match the energy model");
  }
  const int m = m_;
  // Midpoint positions of the cumulative-sum path: x_{i-1} + inc_i / 2.
  // Reading the path at cell midpoints keeps the pair sum exactly symmetric
  // under time reversal of the increments.
  std::vector<double> px(m), py(m), pz(m);
  double cx = 0.0, cy = 0.0, cz = 0.0;
  for (int i = 0; i < m; ++i) {
    px[i] = cx + 0.5 * path.increments(0, i);
    py[i] = cy + 0.5 * path.increments(1, i);
    pz[i] = cz + 0.5 * path.increments(2, i);
    cx += path.increments(0, i);
    cy += path.increments(1, i);
    cz += path.increments(2, i);
  }
  double total = 0.0;
  std::uint64_t collisions = 0;
  for (int i = 0; i < m; ++i) {
    const double xi = px[i], yi = py[i], zi = pz[i];
    const double* kern = kernel_by_lag_.data() - i;
    double row = 0.0;
    for (int j = i + 1; j < m; ++j) {
      const double dx = px[j] - xi, dy = py[j] - yi, dz = pz[j] - zi;
      const double r = std::sqrt(dx * dx + dy * dy + dz * dz);
      double inv;
      if (r < kCollisionRadius) {
        inv = kCollisionCap;
        ++collisions;
      } else {
        inv = 1.0 / r;
      }
      row += kern[j] * inv;
    }
    total += row;
  }
  collisions_ += collisions;
  return alpha_ * dt_ * dt_ * total;  // (alpha/2) * 2 over unordered pairs
}

double energy(const GridPath& path, double alpha, double horizon) {
  return EnergyModel(alpha, horizon, path.m()).energy(path);
}

std::pair<GridPath, bool> pcn_step(const GridPath& path, double beta, double alpha,
                                   double horizon, Rng& rng) {
  if (!(beta > 0.0 && beta < 1.0)) throw std::invalid_argument("beta must be in (0,1)");
  const EnergyModel model(alpha, horizon, path.m());
  const double e_old = model.energy(path);
  GridPath proposal = path;
  const double keep = std::sqrt(1.0 - beta * beta);
  const double sd = beta * std::sqrt(path.dt());
  for (int c = 0; c < path.m(); ++c) {
    for (int k = 0; k < 3; ++k) {
      proposal.increments(k, c) = keep * path.increments(k, c) + sd * rng.normal();
    }
  }
  const double e_new = model.energy(proposal);
  if (std::log(rng.uniform_pos()) < e_new - e_old) return {std::move(proposal), true};
  return {path, false};
}

ChainResult run_chain(double alpha, double horizon, int m, std::size_t n_steps, double beta,
                      Rng& rng, const ChainOptions& opt) {
  if (!(beta > 0.0 && beta < 1.0)) throw std::invalid_argument("beta must be in (0,1)");
  if (n_steps < 100) throw std::invalid_argument("need at least 100 steps");
  const std::size_t burn_in = opt.burn_in > 0 ? opt.burn_in : n_steps / 5;
  EnergyModel model(alpha, horizon, m);
  GridPath path = sample_brownian_grid(horizon, m, rng);
  double e_current = model.energy(path);
  const double dt = path.dt();
  const double sd0 = std::sqrt(dt);
  GridPath proposal = path;

  // Half-window cell range [-T/2, T/2] on the grid.
  const int half_lo = m / 4;
  const int half_hi = m - m / 4;

  std::vector<double> trace, half_trace;
  trace.reserve(n_steps);
  half_trace.reserve(n_steps);
  std::size_t accepted_after_burn_in = 0, steps_after_burn_in = 0;
  std::size_t window_accepts = 0, window_steps = 0;

  for (std::size_t step = 0; step < burn_in + n_steps; ++step) {
    const double keep = std::sqrt(1.0 - beta * beta);
    const double sd = beta * sd0;
    for (int c = 0; c < m; ++c) {
      for (int k = 0; k < 3; ++k) {
        proposal.increments(k, c) = keep * path.increments(k, c) + sd * rng.normal();
      }
    }
    const double e_new = model.energy(proposal);
    const bool accept = std::log(rng.uniform_pos()) < e_new - e_current;
    if (accept) {
      std::swap(path.increments, proposal.increments);
      e_current = e_new;
    }
    if (step < burn_in) {
      if (opt.adapt_beta) {
        window_accepts += accept ? 1 : 0;
        if (++window_steps == 100) {
          const double rate = window_accepts / 100.0;
          beta = std::clamp(beta * std::exp(0.5 * (rate - opt.target_acceptance)), 1e-4,
                            0.999);
          window_accepts = 0;
          window_steps = 0;
        }
      }
      continue;
    }
    steps_after_burn_in += 1;
    accepted_after_burn_in += accept ? 1 : 0;
    double full = 0.0, half = 0.0;
    for (int k = 0; k < 3; ++k) {
      double s = 0.0, sh = 0.0;
      for (int c = 0; c < m; ++c) {
        s += path.increments(k, c);
        if (c >= half_lo && c < half_hi) sh += path.increments(k, c);
      }
      full += s * s;
      half += sh * sh;
    }
    trace.push_back(full / 3.0);
    half_trace.push_back(half / 3.0);
  }

  ChainResult out;
  out.n_steps = n_steps;
  out.beta = beta;
  out.acceptance = static_cast<double>(accepted_after_burn_in) /
                   static_cast<double>(steps_after_burn_in);
  out.collisions = model.collisions();
  out.estimate = mean_se(trace).mean;
  out.std_error = batch_means_se(trace);
  // IAT on a thinned trace keeps the autocovariance pass cheap; scale back.
  const std::size_t stride = std::max<std::size_t>(1, trace.size() / 20000);
  std::vector<double> thinned;
  thinned.reserve(trace.size() / stride + 1);
  for (std::size_t i = 0; i < trace.size(); i += stride) thinned.push_back(trace[i]);
  out.iat = static_cast<double>(stride) * integrated_autocorr_time(thinned);
  out.ess = static_cast<double>(trace.size()) / out.iat;
  out.flagged = out.ess < opt.ess_floor;
  out.half_window_estimate = mean_se(half_trace).mean;
  out.half_window_se = batch_means_se(half_trace);
  return out;
}

DetLemmaReport det_lemma_check(int dim, std::size_t trials, Rng& rng) {
  if (dim < 1 || dim > 12) throw std::invalid_argument("dim must be in [1, 12]");
  DetLemmaReport rep;
  rep.dim = dim;
  rep.trials = trials;
  // Wishart with dim + 8 degrees of freedom: random SPD, but bounded away
  // from singular so the 1e-9 determinant comparison measures the identity
  // rather than floating-point conditioning.
  const int dof = dim + 8;
  Eigen::MatrixXd g(dim, dof);
  for (std::size_t t = 0; t < trials; ++t) {
    for (int i = 0; i < dim; ++i) {
      for (int j = 0; j < dof; ++j) g(i, j) = rng.normal();
    }
    const Eigen::MatrixXd m = g * g.transpose();
    const Eigen::LLT<Eigen::MatrixXd> llt(m);
    if (llt.info() != Eigen::Success) continue;  // near-singular Wishart draw
    const Eigen::VectorXd diag = llt.matrixLLT().diagonal();
    // Conditional variances of the Gaussian vector with covariance M are the
    // squared Cholesky diagonal entries.
    double prod_gamma2 = 1.0, prod_bound = 1.0;
    for (int i = 0; i < dim; ++i) {
      prod_gamma2 *= diag[i] * diag[i];
      prod_bound *= 1.0 + diag[i] * diag[i];
    }
    const double det_direct = m.determinant();
    const double rel = std::abs(det_direct - prod_gamma2) / std::abs(det_direct);
    rep.max_rel_det_error = std::max(rep.max_rel_det_error, rel);
    if (rel > 1e-9) ++rep.det_violations;
    Eigen::MatrixXd ipm = m;
    ipm.diagonal().array() += 1.0;
    if (ipm.determinant() < prod_bound * (1.0 - 1e-9)) ++rep.bound_violations;
  }
  return rep;
}

}  // namespace polaron
