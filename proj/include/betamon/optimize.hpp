#pragma once

// Small unconstrained minimizers used by the likelihood fit: BFGS with a
// backtracking line search, and Nelder-Mead as a derivative-free fallback.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <numeric>
#include <vector>

#include <Eigen/Dense>

namespace betamon::optim {

using Objective = std::function<double(const Eigen::VectorXd&)>;
using ObjectiveWithGradient = std::function<double(const Eigen::VectorXd&, Eigen::VectorXd&)>;

struct Settings {
  /// Stop when |f_k - f_{k+1}| <= rel_tol * max(1, |f_k|).
  double rel_tol = 1e-9;
  double grad_tol = 1e-6;
  std::size_t max_iter = 500;
};

struct Result {
  Eigen::VectorXd x;
  double value = std::numeric_limits<double>::infinity();
  bool converged = false;
  std::size_t iterations = 0;
};

inline Result bfgs(const ObjectiveWithGradient& f, Eigen::VectorXd x0, const Settings& s = {}) {
  const auto n = x0.size();
  Result res;
  res.x = std::move(x0);
  Eigen::VectorXd g(n);
  res.value = f(res.x, g);
  if (!std::isfinite(res.value) || !g.allFinite()) return res;

  Eigen::MatrixXd h = Eigen::MatrixXd::Identity(n, n);
  Eigen::VectorXd g_new(n);
  bool restarted = false;
  for (std::size_t it = 0; it < s.max_iter; ++it) {
    res.iterations = it + 1;
    if (g.lpNorm<Eigen::Infinity>() <= s.grad_tol * std::max(1.0, std::abs(res.value))) {
      res.converged = true;
      return res;
    }
    Eigen::VectorXd dir = -h * g;
    double slope = g.dot(dir);
    if (!(slope < 0.0)) {
      h.setIdentity();
      dir = -g;
      slope = -g.squaredNorm();
    }
    // Keep the first trial step modest relative to the current point.
    double step = 1.0;
    const double dnorm = dir.norm();
    if (dnorm > 10.0 * std::max(1.0, res.x.norm())) step = 10.0 * std::max(1.0, res.x.norm()) / dnorm;

    double f_new = std::numeric_limits<double>::infinity();
    Eigen::VectorXd x_new;
    bool accepted = false;
    for (int ls = 0; ls < 60; ++ls) {
      x_new = res.x + step * dir;
      f_new = f(x_new, g_new);
      if (std::isfinite(f_new) && g_new.allFinite() && f_new <= res.value + 1e-4 * step * slope) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      if (restarted) return res;
      restarted = true;
      h.setIdentity();
      continue;
    }
    restarted = false;

    const Eigen::VectorXd sv = x_new - res.x;
    const Eigen::VectorXd yv = g_new - g;
    const double change = res.value - f_new;
    res.x = x_new;
    g = g_new;
    const double previous = res.value;
    res.value = f_new;
    if (change <= s.rel_tol * std::max(1.0, std::abs(previous))) {
      res.converged = true;
      return res;
    }
    const double sy = sv.dot(yv);
    if (sy > 1e-12 * sv.norm() * yv.norm()) {
      const double rho = 1.0 / sy;
      const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(n, n);
      h = (eye - rho * sv * yv.transpose()) * h * (eye - rho * yv * sv.transpose()) + rho * sv * sv.transpose();
    }
  }
  return res;
}

inline Result nelder_mead(const Objective& f, const Eigen::VectorXd& x0, const Settings& s = {},
                          std::size_t max_evals = 20000) {
  const auto n = x0.size();
  std::vector<Eigen::VectorXd> pts(static_cast<std::size_t>(n) + 1, x0);
  std::vector<double> vals(pts.size());
  for (Eigen::Index i = 0; i < n; ++i) {
    const double delta = std::abs(x0(i)) > 1e-8 ? 0.05 * std::abs(x0(i)) : 0.00025;
    pts[static_cast<std::size_t>(i) + 1](i) += delta;
  }
  std::size_t evals = 0;
  auto eval = [&](const Eigen::VectorXd& x) {
    ++evals;
    const double v = f(x);
    return std::isfinite(v) ? v : std::numeric_limits<double>::infinity();
  };
  for (std::size_t i = 0; i < pts.size(); ++i) vals[i] = eval(pts[i]);

  Result res;
  std::vector<std::size_t> order(pts.size());
  while (evals < max_evals) {
    ++res.iterations;
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return vals[a] < vals[b]; });
    const std::size_t best = order.front(), worst = order.back(), second = order[order.size() - 2];
    if (std::abs(vals[worst] - vals[best]) <= s.rel_tol * std::max(1.0, std::abs(vals[best]))) {
      res.converged = std::isfinite(vals[best]);
      break;
    }
    Eigen::VectorXd centroid = Eigen::VectorXd::Zero(n);
    for (std::size_t i : order)
      if (i != worst) centroid += pts[i];
    centroid /= static_cast<double>(n);

    const Eigen::VectorXd xr = centroid + (centroid - pts[worst]);
    const double fr = eval(xr);
    if (fr < vals[best]) {
      const Eigen::VectorXd xe = centroid + 2.0 * (centroid - pts[worst]);
      const double fe = eval(xe);
      if (fe < fr) {
        pts[worst] = xe;
        vals[worst] = fe;
      } else {
        pts[worst] = xr;
        vals[worst] = fr;
      }
    } else if (fr < vals[second]) {
      pts[worst] = xr;
      vals[worst] = fr;
    } else {
      const bool outside = fr < vals[worst];
      const Eigen::VectorXd xc = outside ? Eigen::VectorXd(centroid + 0.5 * (xr - centroid))
                                         : Eigen::VectorXd(centroid + 0.5 * (pts[worst] - centroid));
      const double fc = eval(xc);
      if (fc < (outside ? fr : vals[worst])) {
        pts[worst] = xc;
        vals[worst] = fc;
      } else {
        for (std::size_t i : order) {
          if (i == best) continue;
          pts[i] = pts[best] + 0.5 * (pts[i] - pts[best]);
          vals[i] = eval(pts[i]);
        }
      }
    }
  }
  const auto it = std::min_element(vals.begin(), vals.end());
  res.x = pts[static_cast<std::size_t>(it - vals.begin())];
  res.value = *it;
  return res;
}

}  // namespace betamon::optim
