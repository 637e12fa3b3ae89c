#pragma once

// Empirical-CDF machinery for the sequential detector: quantile grids,
// partial-sum statistics, the weight function, the weighted quadratic form
// and the truncated long-run covariance of the indicator process.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "betamon/errors.hpp"

namespace betamon {

/// Fraction of `sample` values <= x.
inline double ecdf(std::span<const double> sample, double x) {
  if (sample.empty()) throw config_error("ecdf: empty sample");
  std::size_t count = 0;
  for (double v : sample) count += (v <= x) ? 1 : 0;
  return static_cast<double>(count) / static_cast<double>(sample.size());
}

/// Sampled probabilities u and the matching training quantiles x.
struct QuantileGrid {
  std::vector<double> u;
  std::vector<double> x;

  std::size_t size() const { return x.size(); }

  void validate() const {
    if (x.empty() || u.size() != x.size()) throw config_error("grid: u and x must be nonempty and equal length");
    for (std::size_t i = 0; i < x.size(); ++i) {
      if (!(u[i] > 0.0 && u[i] < 1.0)) throw config_error("grid: percentages must lie in (0, 1)");
      if (!(x[i] >= 0.0 && x[i] <= 1.0)) throw config_error("grid: values must lie in [0, 1]");
      if (i > 0 && !(u[i] > u[i - 1] && x[i] > x[i - 1]))
        throw config_error("grid: u and x must be strictly increasing");
    }
  }

  friend bool operator==(const QuantileGrid&, const QuantileGrid&) = default;
};

/// u_i = i / (d + 1); x_i is the order statistic of rank round(n u_i),
/// clamped to [1, n]. A value tied with its predecessor moves up to the next
/// distinct sample value.
inline QuantileGrid make_quantile_grid(std::span<const double> training, std::size_t d) {
  if (d == 0) throw config_error("make_quantile_grid: d must be positive");
  if (training.empty()) throw config_error("make_quantile_grid: empty training sample");
  std::vector<double> sorted(training.begin(), training.end());
  std::sort(sorted.begin(), sorted.end());
  std::vector<double> uniq(sorted);
  uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
  if (uniq.size() < d) throw config_error("make_quantile_grid: fewer distinct training values than grid points");

  const auto n = static_cast<double>(sorted.size());
  QuantileGrid grid;
  grid.u.resize(d);
  grid.x.resize(d);
  for (std::size_t i = 0; i < d; ++i) {
    const double u = static_cast<double>(i + 1) / static_cast<double>(d + 1);
    const double rank = std::clamp(std::round(n * u), 1.0, n);
    double xi = sorted[static_cast<std::size_t>(rank) - 1];
    if (i > 0 && xi <= grid.x[i - 1]) {
      auto it = std::upper_bound(uniq.begin(), uniq.end(), grid.x[i - 1]);
      if (it == uniq.end())
        throw config_error("make_quantile_grid: cannot resolve tied quantiles with distinct values");
      xi = *it;
    }
    grid.u[i] = u;
    grid.x[i] = xi;
  }
  return grid;
}

/// Truncated long-run covariance estimate of the indicators 1(X_t <= x_i).
struct CovKernel {
  Eigen::MatrixXd gamma;
  std::size_t t_star = 0;
  bool psd_adjusted = false;
  /// Largest eigenvalue magnitude removed by the PSD repair.
  double clip_magnitude = 0.0;

  std::size_t dim() const { return static_cast<std::size_t>(gamma.rows()); }
};

inline constexpr double kClipWarnLevel = 1e-6;

struct PsdRepair {
  Eigen::MatrixXd matrix;
  Eigen::VectorXd eigenvalues;
  Eigen::MatrixXd eigenvectors;
  bool adjusted = false;
  double clip_magnitude = 0.0;
};

/// Symmetrizes and clips negative eigenvalues to zero.
inline PsdRepair psd_repair(const Eigen::MatrixXd& m) {
  if (m.rows() != m.cols()) throw config_error("psd_repair: matrix must be square");
  const Eigen::MatrixXd sym = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(sym);
  if (solver.info() != Eigen::Success) throw numerical_error("psd_repair: eigendecomposition failed");
  PsdRepair out;
  out.eigenvalues = solver.eigenvalues();
  out.eigenvectors = solver.eigenvectors();
  for (Eigen::Index i = 0; i < out.eigenvalues.size(); ++i) {
    if (out.eigenvalues(i) < 0.0) {
      out.adjusted = true;
      out.clip_magnitude = std::max(out.clip_magnitude, -out.eigenvalues(i));
      out.eigenvalues(i) = 0.0;
    }
  }
  if (out.adjusted)
    out.matrix = out.eigenvectors * out.eigenvalues.asDiagonal() * out.eigenvectors.transpose();
  else
    out.matrix = sym;
  return out;
}

/// gamma_ij = sum_{|h| <= t_star} cov(1(X_t <= x_i), 1(X_{t+h} <= x_j)), each
/// lag covariance with denominator n - |h|; symmetrized and PSD-repaired.
inline CovKernel estimate_gamma(std::span<const double> sample, const QuantileGrid& grid, std::size_t t_star) {
  grid.validate();
  if (t_star == 0) throw config_error("estimate_gamma: t_star must be positive");
  const std::size_t n = sample.size();
  if (n < 20 * t_star) throw config_error("estimate_gamma: sample length must be at least 20 * t_star");
  const auto d = static_cast<Eigen::Index>(grid.size());
  const auto rows = static_cast<Eigen::Index>(n);

  Eigen::MatrixXd centered(rows, d);
  for (Eigen::Index t = 0; t < rows; ++t)
    for (Eigen::Index i = 0; i < d; ++i)
      centered(t, i) = sample[static_cast<std::size_t>(t)] <= grid.x[static_cast<std::size_t>(i)] ? 1.0 : 0.0;
  const Eigen::RowVectorXd mean = centered.colwise().mean();
  centered.rowwise() -= mean;

  Eigen::MatrixXd g = (centered.transpose() * centered) / static_cast<double>(n);
  for (std::size_t h = 1; h <= t_star; ++h) {
    const auto len = rows - static_cast<Eigen::Index>(h);
    const Eigen::MatrixXd c = (centered.topRows(len).transpose() * centered.bottomRows(len)) / static_cast<double>(len);
    g += c + c.transpose();
  }

  const PsdRepair repaired = psd_repair(g);
  CovKernel kernel;
  kernel.gamma = repaired.matrix;
  kernel.t_star = t_star;
  kernel.psd_adjusted = repaired.adjusted;
  kernel.clip_magnitude = repaired.clip_magnitude;
  return kernel;
}

/// B_m(s, x) = m^{-1/2} sum_{t=1}^{floor(m s)} (1(X_t <= x) - F0(x)).
inline double b_m(std::span<const double> sample, std::size_t m, double s, double x,
                  const std::function<double(double)>& f0) {
  if (m == 0) throw config_error("b_m: m must be positive");
  if (s < 0.0) throw config_error("b_m: s must be non-negative");
  const auto upto = static_cast<std::size_t>(std::floor(static_cast<double>(m) * s + 1e-9));
  if (upto > sample.size()) throw config_error("b_m: floor(m s) exceeds the sample length");
  const double f = f0(x);
  double sum = 0.0;
  for (std::size_t t = 0; t < upto; ++t) sum += (sample[t] <= x ? 1.0 : 0.0) - f;
  return sum / std::sqrt(static_cast<double>(m));
}

/// One component of D(m, k, x) from the pre-/post-baseline counts. The
/// streaming monitor calls this with the same arguments, so batch and
/// incremental evaluations agree bit for bit.
inline double detector_component(std::size_t m, std::size_t k, double baseline_ecdf, std::size_t post_count) {
  const auto span = static_cast<double>(k - m);
  return (span / std::sqrt(static_cast<double>(m))) * (static_cast<double>(post_count) / span - baseline_ecdf);
}

inline std::vector<double> baseline_ecdf(std::span<const double> training, const QuantileGrid& grid) {
  std::vector<double> out(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) out[i] = ecdf(training, grid.x[i]);
  return out;
}

/// D(m, k, x_i) = ((k - m)/sqrt(m)) (F_{(m+1):k}(x_i) - F_{1:m}(x_i)), where k
/// counts observations (1-based) so the post segment is sample[m .. k-1].
inline std::vector<double> detector(std::span<const double> sample, std::size_t m, std::size_t k,
                                    const QuantileGrid& grid) {
  if (m == 0 || k <= m) throw std::out_of_range("detector: requires 0 < m < k");
  if (k > sample.size()) throw std::out_of_range("detector: k exceeds the sample length");
  const auto base = baseline_ecdf(sample.first(m), grid);
  std::vector<double> out(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) {
    std::size_t post = 0;
    for (std::size_t t = m; t < k; ++t) post += sample[t] <= grid.x[i] ? 1 : 0;
    out[i] = detector_component(m, k, base[i], post);
  }
  return out;
}

inline void check_weight_params(double gamma, double delta) {
  if (!(gamma >= 0.0 && gamma < 0.5)) throw config_error("weight: gamma must lie in [0, 0.5)");
  if (!(delta > 0.0)) throw config_error("weight: delta must be positive");
}

/// rho(s, gamma) = max{(s - 1)^{-gamma} s^{gamma - 1}, delta} for s >= 1.
/// At s = 1 the value saturates to 1 when gamma = 0 and to +infinity when
/// gamma > 0; monitoring never evaluates s = 1.
inline double weight(double s, double gamma, double delta) {
  check_weight_params(gamma, delta);
  if (!(s >= 1.0)) throw config_error("weight: s must be at least 1");
  if (s == 1.0) return gamma == 0.0 ? std::max(1.0, delta) : std::numeric_limits<double>::infinity();
  return std::max(std::pow(s - 1.0, -gamma) * std::pow(s, gamma - 1.0), delta);
}

inline bool is_symmetric(const Eigen::MatrixXd& a, double tol = 0.0) {
  if (a.rows() != a.cols()) return false;
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < i; ++j)
      if (std::abs(a(i, j) - a(j, i)) > tol * std::max(1.0, std::abs(a(i, j)))) return false;
  return true;
}

/// d' A d without validation; for inner loops whose A was checked up front.
inline double quadratic_form(std::span<const double> d, const Eigen::MatrixXd& a) {
  const auto n = static_cast<Eigen::Index>(d.size());
  double total = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    double row = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) row += a(i, j) * d[static_cast<std::size_t>(j)];
    total += d[static_cast<std::size_t>(i)] * row;
  }
  return total;
}

/// rho^2(s, gamma) d' A d.
inline double quad_stat(std::span<const double> d_m, double s, double gamma, double delta, const Eigen::MatrixXd& a) {
  if (a.rows() != static_cast<Eigen::Index>(d_m.size()) || a.cols() != a.rows())
    throw config_error("quad_stat: matrix dimension does not match the detector");
  if (!is_symmetric(a)) throw config_error("quad_stat: weight matrix must be symmetric");
  const double rho = weight(s, gamma, delta);
  return rho * rho * quadratic_form(d_m, a);
}

/// Positive definiteness check via Cholesky.
inline bool is_positive_definite(const Eigen::MatrixXd& a) {
  if (!is_symmetric(a, 1e-12)) return false;
  Eigen::LLT<Eigen::MatrixXd> llt(a);
  return llt.info() == Eigen::Success;
}

/// Default weight matrix (1/d) I.
inline Eigen::MatrixXd identity_weight(std::size_t d) {
  return Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d)) /
         static_cast<double>(d);
}

inline constexpr double kInverseRidge = 1e-8;

/// Gamma^{-1} through the eigendecomposition; a ridge of 1e-8 is added to
/// every eigenvalue when the kernel is singular.
inline Eigen::MatrixXd inverse_weight(const CovKernel& kernel) {
  const PsdRepair r = psd_repair(kernel.gamma);
  const double max_ev = r.eigenvalues.size() ? r.eigenvalues.maxCoeff() : 0.0;
  const double min_ev = r.eigenvalues.size() ? r.eigenvalues.minCoeff() : 0.0;
  const bool singular = !(min_ev > max_ev * std::numeric_limits<double>::epsilon() * 16.0) || min_ev <= 0.0;
  Eigen::VectorXd inv(r.eigenvalues.size());
  for (Eigen::Index i = 0; i < inv.size(); ++i)
    inv(i) = 1.0 / (r.eigenvalues(i) + (singular ? kInverseRidge : 0.0));
  Eigen::MatrixXd out = r.eigenvectors * inv.asDiagonal() * r.eigenvectors.transpose();
  return 0.5 * (out + out.transpose());
}

struct DetectorVector {
  double s = 0.0;
  std::vector<double> d_m;
  double quad = 0.0;
};

inline DetectorVector evaluate_detector(std::span<const double> sample, std::size_t m, std::size_t k,
                                        const QuantileGrid& grid, double gamma, double delta,
                                        const Eigen::MatrixXd& a) {
  DetectorVector out;
  out.s = static_cast<double>(k) / static_cast<double>(m);
  out.d_m = detector(sample, m, k, grid);
  out.quad = quad_stat(out.d_m, out.s, gamma, delta, a);
  return out;
}

}  // namespace betamon
