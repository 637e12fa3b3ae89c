#pragma once

// Monte-Carlo calibration of the uniform threshold c(gamma, alpha) from the
// Gaussian limit D_C(s, x) = B_C(s, x) - s B_C(1, x).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <ostream>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "betamon/errors.hpp"
#include "betamon/format.hpp"
#include "betamon/parallel.hpp"
#include "betamon/random.hpp"
#include "betamon/statistic.hpp"

namespace betamon {

struct ThresholdRequest {
  CovKernel kernel;
  double n_ratio = 1.0;
  std::vector<double> gammas;
  std::vector<double> alphas;
  double delta = 1e-4;
  Eigen::MatrixXd a_matrix;
  std::size_t m_sim = 1000;
  std::size_t reps = 10000;
  std::uint64_t seed = 0;
  unsigned threads = 0;

  /// Last partial-sum index of the s-grid, floor((N + 1) m_sim).
  std::size_t horizon() const {
    return static_cast<std::size_t>(std::floor((n_ratio + 1.0) * static_cast<double>(m_sim) + 1e-6));
  }

  bool production_grade() const { return m_sim >= 100 && reps >= 1000; }

  void validate() const {
    const auto d = static_cast<Eigen::Index>(kernel.dim());
    if (d == 0) throw config_error("threshold: empty kernel");
    if (kernel.gamma.cols() != d) throw config_error("threshold: kernel must be square");
    if (a_matrix.rows() != d || a_matrix.cols() != d) throw config_error("threshold: A has the wrong dimension");
    if (!is_symmetric(a_matrix, 1e-12)) throw config_error("threshold: A must be symmetric");
    if (!(n_ratio > 0.0)) throw config_error("threshold: N must be positive");
    if (m_sim == 0 || reps == 0) throw config_error("threshold: m_sim and reps must be positive");
    if (horizon() <= m_sim) throw config_error("threshold: s-grid is empty; increase N or m_sim");
    if (gammas.empty()) throw config_error("threshold: no gamma values");
    for (double g : gammas) check_weight_params(g, delta);
    for (double a : alphas)
      if (!(a > 0.0 && a < 1.0)) throw config_error("threshold: alpha must lie in (0, 1)");
  }
};

/// Symmetric square root of a PSD kernel. Fails when the kernel has a
/// materially negative eigenvalue (PSD repair must run first).
inline Eigen::MatrixXd kernel_sqrt(const Eigen::MatrixXd& gamma) {
  if (!is_symmetric(gamma, 1e-10)) throw numerical_error("kernel_sqrt: kernel is not symmetric");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(0.5 * (gamma + gamma.transpose()));
  if (solver.info() != Eigen::Success) throw numerical_error("kernel_sqrt: eigendecomposition failed");
  Eigen::VectorXd ev = solver.eigenvalues();
  const double scale = std::max(1.0, ev.cwiseAbs().maxCoeff());
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    if (ev(i) < -1e-10 * scale) throw numerical_error("kernel_sqrt: kernel is not positive semidefinite");
    ev(i) = std::sqrt(std::max(ev(i), 0.0));
  }
  return solver.eigenvectors() * ev.asDiagonal() * solver.eigenvectors().transpose();
}

/// Walks one replication of the limit process in standard-normal
/// coordinates: u_k = z_1 + ... + z_k with z ~ N(0, I_d). For every
/// k = m_sim + 1 .. horizon, calls visit(k, u_k, u_{m_sim}); the Gaussian
/// limit is then B_C(k / m_sim) = S u_k / sqrt(m_sim) with S = Gamma^{1/2}.
template <typename Visitor>
void walk_limit_process(Rng& rng, Eigen::Index d, std::size_t m_sim, std::size_t horizon, Visitor&& visit) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXd u = Eigen::VectorXd::Zero(d);
  Eigen::VectorXd u_m(d);
  for (std::size_t k = 1; k <= horizon; ++k) {
    for (Eigen::Index i = 0; i < d; ++i) u(i) += normal(rng);
    if (k == m_sim) u_m = u;
    if (k > m_sim) visit(k, u, u_m);
  }
}

/// Sup over the s-grid of rho^2(s, gamma) D_C' A D_C for every gamma of the
/// request; result[r][g]. All gammas share the replication's draws.
inline std::vector<std::vector<double>> simulate_sup_stats(const ThresholdRequest& req) {
  req.validate();
  const Eigen::MatrixXd root = kernel_sqrt(req.kernel.gamma);
  const auto d = root.rows();
  // D_C' A D_C = v' (S A S) v / m_sim with v = u_k - s u_m.
  Eigen::MatrixXd form = root * req.a_matrix * root;
  form = 0.5 * (form + form.transpose());
  const double inv_m = 1.0 / static_cast<double>(req.m_sim);
  const std::size_t horizon = req.horizon();
  const std::size_t ng = req.gammas.size();

  // rho^2 depends only on (k, gamma): tabulate once.
  std::vector<double> rho2((horizon - req.m_sim) * ng);
  for (std::size_t k = req.m_sim + 1; k <= horizon; ++k)
    for (std::size_t g = 0; g < ng; ++g) {
      const double r = weight(static_cast<double>(k) * inv_m, req.gammas[g], req.delta);
      rho2[(k - req.m_sim - 1) * ng + g] = r * r;
    }

  std::vector<std::vector<double>> out(req.reps, std::vector<double>(ng, 0.0));
  parallel_for(req.reps, req.threads, [&](std::size_t r) {
    Rng rng = make_rng(req.seed, r);
    Eigen::VectorXd v(d);
    Eigen::VectorXd fv(d);
    auto& best = out[r];
    walk_limit_process(rng, d, req.m_sim, horizon,
                       [&](std::size_t k, const Eigen::VectorXd& u, const Eigen::VectorXd& u_m) {
                         const double s = static_cast<double>(k) * inv_m;
                         v.noalias() = u - s * u_m;
                         fv.noalias() = form * v;
                         const double q = v.dot(fv) * inv_m;
                         const double* w = &rho2[(k - req.m_sim - 1) * ng];
                         for (std::size_t g = 0; g < ng; ++g) best[g] = std::max(best[g], w[g] * q);
                       });
  });
  return out;
}

/// reps sup values for one gamma; identical to the matching column of
/// simulate_sup_stats on the same request.
inline std::vector<double> simulate_sup_stat(const ThresholdRequest& req, double gamma) {
  ThresholdRequest single = req;
  single.gammas = {gamma};
  const auto all = simulate_sup_stats(single);
  std::vector<double> out(all.size());
  for (std::size_t r = 0; r < all.size(); ++r) out[r] = all[r][0];
  return out;
}

/// Order statistic of index ceil((1 - alpha) n) (1-based) of a sorted sample.
inline std::size_t quantile_index(std::size_t n, double alpha) {
  const double pos = std::ceil((1.0 - alpha) * static_cast<double>(n) - 1e-9);
  return static_cast<std::size_t>(std::clamp(pos, 1.0, static_cast<double>(n)));
}

inline double upper_quantile(std::span<const double> sorted, double alpha) {
  return sorted[quantile_index(sorted.size(), alpha) - 1];
}

/// Standard error of the (1 - alpha) sample quantile: the binomial standard
/// deviation of the ECDF at the quantile, divided by a density estimated from
/// the order statistics round(sqrt(n)) ranks on either side.
inline double quantile_standard_error(std::span<const double> sorted, double alpha) {
  const std::size_t n = sorted.size();
  if (n < 3) return 0.0;
  const std::size_t j = quantile_index(n, alpha) - 1;
  const std::size_t h = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(std::sqrt(static_cast<double>(n)))));
  const std::size_t lo = j >= h ? j - h : 0;
  const std::size_t hi = std::min(n - 1, j + h);
  const double width = sorted[hi] - sorted[lo];
  if (!(width > 0.0)) return 0.0;
  const double density = (static_cast<double>(hi - lo) / static_cast<double>(n)) / width;
  return std::sqrt(alpha * (1.0 - alpha) / static_cast<double>(n)) / density;
}

struct ThresholdTable {
  std::vector<double> gammas;
  std::vector<double> alphas;
  std::vector<std::vector<double>> c;      // [gamma][alpha]
  std::vector<std::vector<double>> mc_se;  // [gamma][alpha]

  double at(double gamma, double alpha) const {
    for (std::size_t g = 0; g < gammas.size(); ++g)
      for (std::size_t a = 0; a < alphas.size(); ++a)
        if (gammas[g] == gamma && alphas[a] == alpha) return c[g][a];
    throw std::out_of_range("threshold table has no entry for the requested (gamma, alpha)");
  }

  /// c(gamma, .) strictly decreasing as alpha grows, for every gamma.
  bool monotone_in_alpha() const {
    for (std::size_t g = 0; g < gammas.size(); ++g)
      for (std::size_t a = 0; a < alphas.size(); ++a)
        for (std::size_t b = 0; b < alphas.size(); ++b)
          if (alphas[a] < alphas[b] && !(c[g][a] > c[g][b])) return false;
    return true;
  }

  /// c(., alpha) increasing in gamma, for every alpha.
  bool increasing_in_gamma() const {
    for (std::size_t a = 0; a < alphas.size(); ++a)
      for (std::size_t g = 0; g < gammas.size(); ++g)
        for (std::size_t h = 0; h < gammas.size(); ++h)
          if (gammas[g] < gammas[h] && !(c[g][a] < c[h][a])) return false;
    return true;
  }
};

inline ThresholdTable table_from_sups(const std::vector<std::vector<double>>& sups, std::vector<double> gammas,
                                      std::vector<double> alphas) {
  ThresholdTable table;
  table.gammas = std::move(gammas);
  table.alphas = std::move(alphas);
  table.c.assign(table.gammas.size(), std::vector<double>(table.alphas.size()));
  table.mc_se = table.c;
  std::vector<double> column(sups.size());
  for (std::size_t g = 0; g < table.gammas.size(); ++g) {
    for (std::size_t r = 0; r < sups.size(); ++r) column[r] = sups[r][g];
    std::sort(column.begin(), column.end());
    for (std::size_t a = 0; a < table.alphas.size(); ++a) {
      table.c[g][a] = upper_quantile(column, table.alphas[a]);
      table.mc_se[g][a] = quantile_standard_error(column, table.alphas[a]);
    }
  }
  return table;
}

inline ThresholdTable threshold_table(const ThresholdRequest& req) {
  if (req.alphas.empty()) throw config_error("threshold: no alpha values");
  return table_from_sups(simulate_sup_stats(req), req.gammas, req.alphas);
}

/// Rows gamma, columns alpha.
inline void write_threshold_csv(std::ostream& os, const ThresholdTable& table) {
  os << "gamma";
  for (double a : table.alphas) os << "," << Num{a};
  os << "\n";
  for (std::size_t g = 0; g < table.gammas.size(); ++g) {
    os << Num{table.gammas[g]};
    for (double v : table.c[g]) os << "," << Num{v};
    os << "\n";
  }
}

}  // namespace betamon
