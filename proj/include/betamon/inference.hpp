#pragma once

// Conditional maximum-likelihood fitting of the generalized Beta AR model,
// AIC/MAE reporting, the (p, q) selection sweep, and the year/month
// detrending regression applied before fitting real monthly data.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/special_functions/digamma.hpp>

#include "betamon/errors.hpp"
#include "betamon/model.hpp"
#include "betamon/optimize.hpp"
#include "betamon/parallel.hpp"

namespace betamon {

namespace detail {

/// Regressors and clamped responses for t = start .. n-1.
struct Design {
  Eigen::MatrixXd z;  // columns: 1, x_link lags 1..p, w lags 0..q
  Eigen::VectorXd y;
  Eigen::VectorXd log_y;
  Eigen::VectorXd log_1my;
  std::size_t start = 0;
};

inline Design build_design(const GBetaArModel& shape, const SeriesPair& data, std::size_t start) {
  data.validate();
  const std::size_t n = data.size();
  const auto lag = static_cast<std::size_t>(shape.max_lag());
  if (start < lag) throw config_error("likelihood: conditioning start precedes the model's maximum lag");
  if (n <= start) throw config_error("likelihood: series too short for the requested orders");
  const auto rows = static_cast<Eigen::Index>(n - start);
  const Eigen::Index cols = 1 + shape.p + (shape.exogenous ? shape.q + 1 : 0);
  Design d;
  d.start = start;
  d.z.resize(rows, cols);
  d.y.resize(rows);
  d.log_y.resize(rows);
  d.log_1my.resize(rows);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const std::size_t t = start + static_cast<std::size_t>(r);
    Eigen::Index c = 0;
    d.z(r, c++) = 1.0;
    for (int i = 1; i <= shape.p; ++i) d.z(r, c++) = x_link(data.x[t - static_cast<std::size_t>(i)], shape.x_clamp);
    if (shape.exogenous)
      for (int j = 0; j <= shape.q; ++j) d.z(r, c++) = w_transform(data.w[t - static_cast<std::size_t>(j)], shape.w_clamp);
    const double y = shape.x_clamp.apply(data.x[t]);
    d.y(r) = y;
    d.log_y(r) = std::log(y);
    d.log_1my(r) = std::log1p(-y);
  }
  return d;
}

inline Eigen::VectorXd pack(const GBetaArModel& m) {
  const Eigen::Index k = 1 + m.p + (m.exogenous ? m.q + 1 : 0);
  Eigen::VectorXd theta(k + 1);
  Eigen::Index c = 0;
  theta(c++) = m.phi0;
  for (double v : m.phi) theta(c++) = v;
  if (m.exogenous)
    for (double v : m.psi) theta(c++) = v;
  theta(c) = std::log(m.tau);
  return theta;
}

inline GBetaArModel unpack(const GBetaArModel& shape, const Eigen::VectorXd& theta) {
  GBetaArModel m = shape;
  Eigen::Index c = 0;
  m.phi0 = theta(c++);
  for (auto& v : m.phi) v = theta(c++);
  if (m.exogenous)
    for (auto& v : m.psi) v = theta(c++);
  m.tau = std::exp(theta(c));
  return m;
}

/// Negative conditional log-likelihood over (beta, log tau); fills grad when
/// non-null. Returns +inf on inadmissible parameters.
inline double objective(const Design& d, const Eigen::VectorXd& theta, Eigen::VectorXd* grad) {
  const Eigen::Index k = d.z.cols();
  const double log_tau = theta(k);
  const double tau = std::exp(log_tau);
  constexpr double inf = std::numeric_limits<double>::infinity();
  if (!(tau > 0.0) || !std::isfinite(tau)) return inf;
  const Eigen::VectorXd eta = d.z * theta.head(k);
  const double lg_tau = std::lgamma(tau);
  const double dg_tau = grad ? boost::math::digamma(tau) : 0.0;
  double total = 0.0;
  Eigen::VectorXd d_eta;
  double d_logtau = 0.0;
  if (grad) d_eta.resize(eta.size());
  for (Eigen::Index r = 0; r < eta.size(); ++r) {
    const double mu = inverse_logit(eta(r));
    const double a = tau * mu;
    const double b = tau * (1.0 - mu);
    if (!(a > 0.0 && b > 0.0) || !std::isfinite(a) || !std::isfinite(b)) return inf;
    total += lg_tau - std::lgamma(a) - std::lgamma(b) + (a - 1.0) * d.log_y(r) + (b - 1.0) * d.log_1my(r);
    if (grad) {
      const double dga = boost::math::digamma(a);
      const double dgb = boost::math::digamma(b);
      d_eta(r) = tau * mu * (1.0 - mu) * (d.log_y(r) - d.log_1my(r) - dga + dgb);
      d_logtau += tau * (dg_tau - mu * dga - (1.0 - mu) * dgb + mu * d.log_y(r) + (1.0 - mu) * d.log_1my(r));
    }
  }
  if (!std::isfinite(total)) return inf;
  if (grad) {
    grad->resize(k + 1);
    grad->head(k) = -(d.z.transpose() * d_eta);
    (*grad)(k) = -d_logtau;
  }
  return -total;
}

}  // namespace detail

/// -sum_{t >= start} log Beta-density(X_t; tau mu_t, tau (1 - mu_t)), with
/// start = max lag unless given. Observations are clamped to x_clamp first.
/// Returns +inf for inadmissible parameters.
inline double negative_loglik(const GBetaArModel& model, const SeriesPair& data,
                              std::optional<std::size_t> start = std::nullopt) {
  if (!(model.tau > 0.0) || !std::isfinite(model.tau)) return std::numeric_limits<double>::infinity();
  model.validate();
  const auto d = detail::build_design(model, data, start.value_or(static_cast<std::size_t>(model.max_lag())));
  return detail::objective(d, detail::pack(model), nullptr);
}

/// Analytic gradient of negative_loglik in (phi0, phi, psi, log tau).
inline Eigen::VectorXd negative_loglik_gradient(const GBetaArModel& model, const SeriesPair& data,
                                                std::optional<std::size_t> start = std::nullopt) {
  model.validate();
  const auto d = detail::build_design(model, data, start.value_or(static_cast<std::size_t>(model.max_lag())));
  Eigen::VectorXd g;
  detail::objective(d, detail::pack(model), &g);
  return g;
}

/// mu_t for t = start .. n-1 under `model`.
inline std::vector<double> conditional_means(const GBetaArModel& model, const SeriesPair& data, std::size_t start) {
  model.validate();
  data.validate();
  if (start < static_cast<std::size_t>(model.max_lag())) throw config_error("conditional_means: start precedes max lag");
  std::vector<double> mu;
  mu.reserve(data.size() > start ? data.size() - start : 0);
  for (std::size_t t = start; t < data.size(); ++t) mu.push_back(inverse_logit(model.eta(data.x, data.w, t)));
  return mu;
}

/// (1/n_eff) sum |X_t - mu_t| over t = start .. n-1.
inline double mean_absolute_error(const GBetaArModel& model, const SeriesPair& data, std::size_t start) {
  const auto mu = conditional_means(model, data, start);
  double total = 0.0;
  for (std::size_t i = 0; i < mu.size(); ++i) total += std::abs(data.x[start + i] - mu[i]);
  return total / static_cast<double>(mu.size());
}

inline double aic_of(double loglik, int parameter_count) { return -2.0 * loglik + 2.0 * parameter_count; }

struct FitOptions {
  bool exogenous = true;
  Clamp x_clamp = kDefaultXClamp;
  Clamp w_clamp = kDefaultWClamp;
  /// First conditioned index; defaults to the model's max lag. Sweeps set a
  /// common value so AICs are computed on the same observations.
  std::optional<std::size_t> start;
  optim::Settings optimizer{};
};

struct FitResult {
  GBetaArModel model;
  double loglik = 0.0;
  double aic = 0.0;
  double mae = 0.0;
  bool converged = false;
  std::size_t iterations = 0;
  std::size_t start = 0;
  std::size_t n_eff = 0;
  /// "bfgs" or "nelder-mead".
  std::string method;
};

/// Least-squares start on logit(X*) and a method-of-moments dispersion.
inline GBetaArModel starting_model(const GBetaArModel& shape, const detail::Design& d) {
  Eigen::VectorXd target(d.y.size());
  for (Eigen::Index r = 0; r < target.size(); ++r) target(r) = logit(d.y(r));
  Eigen::VectorXd beta = d.z.colPivHouseholderQr().solve(target);
  if (!beta.allFinite()) beta = Eigen::VectorXd::Zero(d.z.cols());
  const Eigen::VectorXd eta = d.z * beta;
  double num = 0.0, den = 0.0;
  for (Eigen::Index r = 0; r < eta.size(); ++r) {
    const double mu = inverse_logit(eta(r));
    num += mu * (1.0 - mu);
    den += (d.y(r) - mu) * (d.y(r) - mu);
  }
  double tau = den > 0.0 ? num / den - 1.0 : 1e3;
  tau = std::clamp(std::isfinite(tau) ? tau : 1.0, 1.0, 1e6);
  Eigen::VectorXd theta(beta.size() + 1);
  theta << beta, std::log(tau);
  return detail::unpack(shape, theta);
}

/// Quasi-Newton on (phi0, phi, psi, log tau) with analytic gradient from the
/// least-squares start; Nelder-Mead takes over when BFGS does not converge.
inline FitResult fit(int p, int q, const SeriesPair& data, const FitOptions& opts = {}) {
  if (p < 0 || q < 0) throw config_error("fit: orders must be non-negative");
  data.validate();
  GBetaArModel shape;
  shape.p = p;
  shape.q = opts.exogenous ? q : 0;
  shape.phi.assign(static_cast<std::size_t>(p), 0.0);
  shape.psi = opts.exogenous ? std::vector<double>(static_cast<std::size_t>(q) + 1, 0.0) : std::vector<double>{};
  shape.exogenous = opts.exogenous;
  shape.x_clamp = opts.x_clamp;
  shape.w_clamp = opts.w_clamp;
  shape.validate();

  const std::size_t lag = static_cast<std::size_t>(shape.max_lag());
  const std::size_t minimum = lag + static_cast<std::size_t>(p + (opts.exogenous ? q : 0)) + 4;
  if (data.size() < minimum) throw config_error("fit: series too short for the requested orders");
  const std::size_t start = opts.start.value_or(lag);
  const detail::Design design = detail::build_design(shape, data, start);
  {
    const double lo = design.y.minCoeff(), hi = design.y.maxCoeff();
    if (!(hi > lo)) throw config_error("fit: constant series cannot be fitted");
  }

  const GBetaArModel init = starting_model(shape, design);
  const Eigen::VectorXd theta0 = detail::pack(init);
  const double f0 = detail::objective(design, theta0, nullptr);

  auto with_grad = [&](const Eigen::VectorXd& th, Eigen::VectorXd& g) { return detail::objective(design, th, &g); };
  optim::Result best = optim::bfgs(with_grad, theta0, opts.optimizer);
  std::string method = "bfgs";
  if (!best.converged || !std::isfinite(best.value)) {
    auto plain = [&](const Eigen::VectorXd& th) { return detail::objective(design, th, nullptr); };
    const Eigen::VectorXd from = std::isfinite(best.value) ? best.x : theta0;
    optim::Result nm = optim::nelder_mead(plain, from, opts.optimizer);
    if (nm.value <= best.value || !std::isfinite(best.value)) {
      nm.iterations += best.iterations;
      best = nm;
      method = "nelder-mead";
    }
  }
  if (!(best.value <= f0)) {
    best.x = theta0;
    best.value = f0;
    best.converged = false;
  }
  if (!std::isfinite(best.value)) throw numerical_error("fit: likelihood is not finite at any explored point");

  FitResult res;
  res.model = detail::unpack(shape, best.x);
  res.loglik = -best.value;
  res.aic = aic_of(res.loglik, res.model.parameter_count());
  res.mae = mean_absolute_error(res.model, data, start);
  res.converged = best.converged;
  res.iterations = best.iterations;
  res.start = start;
  res.n_eff = data.size() - start;
  res.method = method;
  return res;
}

/// Standard errors from the inverse of a central-difference Hessian of the
/// analytic gradient, in natural parameter order (phi0, phi, psi, tau).
inline std::vector<double> standard_errors(const GBetaArModel& model, const SeriesPair& data,
                                           std::optional<std::size_t> start = std::nullopt) {
  const auto d = detail::build_design(model, data, start.value_or(static_cast<std::size_t>(model.max_lag())));
  const Eigen::VectorXd theta = detail::pack(model);
  const auto k = theta.size();
  Eigen::MatrixXd hess(k, k);
  Eigen::VectorXd gp, gm;
  for (Eigen::Index i = 0; i < k; ++i) {
    const double h = 1e-5 * std::max(1.0, std::abs(theta(i)));
    Eigen::VectorXd tp = theta, tm = theta;
    tp(i) += h;
    tm(i) -= h;
    detail::objective(d, tp, &gp);
    detail::objective(d, tm, &gm);
    hess.col(i) = (gp - gm) / (2.0 * h);
  }
  hess = 0.5 * (hess + hess.transpose());
  const Eigen::MatrixXd cov = hess.inverse();
  std::vector<double> se(static_cast<std::size_t>(k));
  for (Eigen::Index i = 0; i < k; ++i) se[static_cast<std::size_t>(i)] = std::sqrt(std::max(cov(i, i), 0.0));
  se.back() *= model.tau;  // delta method from log tau
  return se;
}

struct SweepCell {
  int p = 0;
  int q = 0;
  bool exogenous = true;
  std::optional<FitResult> result;
  std::string error;
};

struct SweepResult {
  std::vector<SweepCell> cells;
  std::optional<std::size_t> best;  // index of the minimum-AIC cell
  std::size_t start = 0;
};

struct SweepOptions {
  /// Adds one exogenous-free cell per p.
  bool include_no_exog = false;
  FitOptions fit{};
  unsigned threads = 1;
};

/// One fit per (p, q) cell, all conditioned on the same first index so the
/// AICs compare likelihoods of identical observations. Failed cells keep
/// their error message and the sweep continues.
inline SweepResult model_selection_sweep(const SeriesPair& data, std::span<const int> p_range,
                                         std::span<const int> q_range, const SweepOptions& opts = {}) {
  if (p_range.empty() || (q_range.empty() && !opts.include_no_exog))
    throw config_error("sweep: ranges must be nonempty");
  SweepResult out;
  std::size_t start = 0;
  for (int p : p_range) {
    if (opts.include_no_exog) {
      out.cells.push_back({p, 0, false, std::nullopt, {}});
      start = std::max(start, static_cast<std::size_t>(p));
    }
    for (int q : q_range) {
      out.cells.push_back({p, q, true, std::nullopt, {}});
      start = std::max(start, static_cast<std::size_t>(std::max(p, q)));
    }
  }
  if (opts.fit.start) start = std::max(start, *opts.fit.start);
  out.start = start;
  parallel_for(out.cells.size(), opts.threads, [&](std::size_t i) {
    auto& cell = out.cells[i];
    FitOptions fo = opts.fit;
    fo.exogenous = cell.exogenous;
    fo.start = start;
    try {
      cell.result = fit(cell.p, cell.q, data, fo);
    } catch (const std::exception& e) {
      cell.error = e.what();
    }
  });
  for (std::size_t i = 0; i < out.cells.size(); ++i) {
    if (!out.cells[i].result) continue;
    if (!out.best || out.cells[i].result->aic < out.cells[*out.best].result->aic) out.best = i;
  }
  return out;
}

/// value ~ intercept + slope (year - base_year) + month effect, December as
/// the reference month.
struct DetrendModel {
  double intercept = 0.0;
  double year_slope = 0.0;
  std::array<double, 12> month_effect{};  // index 11 (December) is 0
  int base_year = 0;

  double fitted(int year, int month) const {
    return intercept + year_slope * static_cast<double>(year - base_year) + month_effect[static_cast<std::size_t>(month - 1)];
  }
};

struct DetrendResult {
  DetrendModel model;
  std::vector<double> adjusted;  // value - fitted
};

inline std::vector<double> apply_detrend(const DetrendModel& model, std::span<const double> values,
                                         std::span<const int> years, std::span<const int> months) {
  if (values.size() != years.size() || values.size() != months.size())
    throw config_error("detrend: values, years and months must have equal length");
  std::vector<double> out(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (months[i] < 1 || months[i] > 12) throw config_error("detrend: months must lie in 1..12");
    out[i] = values[i] - model.fitted(years[i], months[i]);
  }
  return out;
}

inline std::vector<double> retrend(const DetrendModel& model, std::span<const double> adjusted,
                                   std::span<const int> years, std::span<const int> months) {
  std::vector<double> out(adjusted.size());
  for (std::size_t i = 0; i < adjusted.size(); ++i) out[i] = adjusted[i] + model.fitted(years[i], months[i]);
  return out;
}

inline DetrendResult detrend(std::span<const double> values, std::span<const int> years, std::span<const int> months) {
  if (values.size() != years.size() || values.size() != months.size())
    throw config_error("detrend: values, years and months must have equal length");
  if (values.empty()) throw config_error("detrend: empty series");
  const auto n = static_cast<Eigen::Index>(values.size());
  const int base = *std::min_element(years.begin(), years.end());
  Eigen::MatrixXd x = Eigen::MatrixXd::Zero(n, 13);
  Eigen::VectorXd y(n);
  for (Eigen::Index r = 0; r < n; ++r) {
    const auto i = static_cast<std::size_t>(r);
    if (months[i] < 1 || months[i] > 12) throw config_error("detrend: months must lie in 1..12");
    x(r, 0) = 1.0;
    x(r, 1) = static_cast<double>(years[i] - base);
    if (months[i] < 12) x(r, 1 + months[i]) = 1.0;
    y(r) = values[i];
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x);
  if (qr.rank() < 13) {
    std::string why = "detrend: rank-deficient design (rank " + std::to_string(qr.rank()) + " of 13)";
    std::array<bool, 12> seen{};
    for (int mth : months) seen[static_cast<std::size_t>(mth - 1)] = true;
    for (int mth = 1; mth <= 12; ++mth)
      if (!seen[static_cast<std::size_t>(mth - 1)]) why += "; month " + std::to_string(mth) + " never observed";
    if (*std::max_element(years.begin(), years.end()) == base) why += "; only one distinct year";
    throw config_error(why);
  }
  const Eigen::VectorXd beta = qr.solve(y);
  DetrendResult out;
  out.model.intercept = beta(0);
  out.model.year_slope = beta(1);
  out.model.base_year = base;
  for (int mth = 1; mth < 12; ++mth) out.model.month_effect[static_cast<std::size_t>(mth - 1)] = beta(1 + mth);
  out.adjusted = apply_detrend(out.model, values, years, months);
  return out;
}

}  // namespace betamon
