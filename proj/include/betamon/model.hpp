#pragma once

// Generalized Beta AR(p) model with a scalar exogenous regressor, and exact
// simulation of both the exogenous ARMA input and the compositional output.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "betamon/errors.hpp"
#include "betamon/random.hpp"

namespace betamon {

struct Clamp {
  double lo = 0.0;
  double hi = 1.0;

  double apply(double v) const { return std::min(std::max(lo, v), hi); }
  friend bool operator==(const Clamp&, const Clamp&) = default;
};

inline constexpr Clamp kDefaultXClamp{0.001, 0.999};
inline constexpr Clamp kDefaultWClamp{-10.0, 10.0};

inline double logit(double u) {
  if (!(u > 0.0 && u < 1.0)) throw std::domain_error("logit: argument must lie in (0, 1)");
  return std::log(u / (1.0 - u));
}

inline double inverse_logit(double eta) {
  if (eta >= 0.0) return 1.0 / (1.0 + std::exp(-eta));
  const double e = std::exp(eta);
  return e / (1.0 + e);
}

/// Clamp-then-logit transform of a lagged output; bounded by
/// [logit(clamp.lo), logit(clamp.hi)].
inline double x_link(double u, const Clamp& clamp) { return logit(clamp.apply(u)); }

inline double w_transform(double w, const Clamp& clamp) { return clamp.apply(w); }

/// logit(mu_t) = phi0 + sum_i phi_i x_link(X_{t-i}) + sum_j psi_j w_transform(W_{t-j}),
/// X_t | past ~ Beta(tau mu_t, tau (1 - mu_t)).
///
/// `exogenous == false` drops the W terms entirely (psi must then be empty);
/// with `exogenous == true` and q = 0 the contemporaneous W_t still enters.
struct GBetaArModel {
  int p = 0;
  int q = 0;
  double phi0 = 0.0;
  std::vector<double> phi;
  std::vector<double> psi{0.0};
  double tau = 1.0;
  Clamp x_clamp = kDefaultXClamp;
  Clamp w_clamp = kDefaultWClamp;
  bool exogenous = true;

  int max_lag() const { return exogenous ? std::max(p, q) : p; }

  /// Number of free parameters: phi0, phi_1..phi_p, psi_0..psi_q, tau.
  int parameter_count() const { return exogenous ? p + q + 3 : p + 2; }

  void validate() const {
    if (p < 0 || q < 0) throw config_error("model: orders must be non-negative");
    if (static_cast<int>(phi.size()) != p) throw config_error("model: phi must have length p");
    if (exogenous && static_cast<int>(psi.size()) != q + 1)
      throw config_error("model: psi must have length q + 1");
    if (!exogenous && !psi.empty()) throw config_error("model: psi must be empty without exogenous input");
    if (!(tau > 0.0) || !std::isfinite(tau)) throw config_error("model: tau must be positive");
    if (!(x_clamp.lo > 0.0 && x_clamp.lo < x_clamp.hi && x_clamp.hi < 1.0))
      throw config_error("model: x clamp must satisfy 0 < lo < hi < 1");
    if (!(w_clamp.lo < w_clamp.hi)) throw config_error("model: w clamp must satisfy lo < hi");
  }

  /// Linear predictor at position t of aligned series x and w. Requires
  /// t >= max_lag(); the first max_lag() entries act as history.
  double eta(std::span<const double> x, std::span<const double> w, std::size_t t) const {
    double e = phi0;
    for (int i = 1; i <= p; ++i) e += phi[i - 1] * x_link(x[t - i], x_clamp);
    if (exogenous)
      for (int j = 0; j <= q; ++j) e += psi[j] * w_transform(w[t - j], w_clamp);
    return e;
  }

  friend bool operator==(const GBetaArModel&, const GBetaArModel&) = default;
};

/// Gaussian ARMA description of the exogenous input:
/// W_t = sum_i ar_i W_{t-i} + sd * (e_t + sum_j ma_j e_{t-j}), e_t ~ N(0, 1).
struct ExogenousSpec {
  std::vector<double> ar;
  std::vector<double> ma;
  double innovation_sd = 1.0;
  std::size_t burn_in = 500;

  friend bool operator==(const ExogenousSpec&, const ExogenousSpec&) = default;
};

/// True when all roots of 1 - ar_1 z - ... - ar_p z^p lie outside the unit disk.
inline bool ar_is_stationary(std::span<const double> ar) {
  const auto n = static_cast<Eigen::Index>(ar.size());
  if (n == 0) return true;
  Eigen::MatrixXd companion = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) companion(0, i) = ar[static_cast<std::size_t>(i)];
  for (Eigen::Index i = 1; i < n; ++i) companion(i, i - 1) = 1.0;
  Eigen::EigenSolver<Eigen::MatrixXd> solver(companion, false);
  for (Eigen::Index i = 0; i < n; ++i)
    if (std::abs(solver.eigenvalues()(i)) >= 1.0) return false;
  return true;
}

inline void validate(const ExogenousSpec& spec) {
  if (!(spec.innovation_sd > 0.0)) throw config_error("exogenous: innovation_sd must be positive");
  if (!ar_is_stationary(spec.ar)) throw config_error("exogenous: AR polynomial is not stationary");
}

/// Stateful ARMA generator. Histories are kept in unit-innovation form so a
/// process can switch coefficients mid-stream (regime change) and continue
/// from the same past.
class ArmaGenerator {
 public:
  explicit ArmaGenerator(ExogenousSpec spec) : spec_(std::move(spec)) {
    validate(spec_);
    const std::size_t lags = std::max(spec_.ar.size(), spec_.ma.size()) + 1;
    w_hist_.assign(lags, 0.0);
    e_hist_.assign(lags, 0.0);
  }

  /// Replaces the coefficients; the accumulated history is kept.
  void switch_to(ExogenousSpec spec) {
    validate(spec);
    spec_ = std::move(spec);
    const std::size_t lags = std::max(spec_.ar.size(), spec_.ma.size()) + 1;
    if (lags > w_hist_.size()) {
      w_hist_.resize(lags, 0.0);
      e_hist_.resize(lags, 0.0);
    }
  }

  double next(Rng& rng) {
    const double e = normal_(rng);
    double w = spec_.innovation_sd * e;
    for (std::size_t i = 0; i < spec_.ar.size(); ++i) w += spec_.ar[i] * w_hist_[i];
    for (std::size_t j = 0; j < spec_.ma.size(); ++j) w += spec_.innovation_sd * spec_.ma[j] * e_hist_[j];
    for (std::size_t i = w_hist_.size() - 1; i > 0; --i) {
      w_hist_[i] = w_hist_[i - 1];
      e_hist_[i] = e_hist_[i - 1];
    }
    w_hist_[0] = w;
    e_hist_[0] = e;
    return w;
  }

  const ExogenousSpec& spec() const { return spec_; }

 private:
  ExogenousSpec spec_;
  std::vector<double> w_hist_;  // w_hist_[0] = W_{t-1}
  std::vector<double> e_hist_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

/// n values of the ARMA process after spec.burn_in discarded samples.
inline std::vector<double> simulate_exogenous(const ExogenousSpec& spec, std::size_t n, std::uint64_t seed) {
  if (n == 0) throw config_error("simulate_exogenous: n must be at least 1");
  ArmaGenerator gen(spec);
  Rng rng(seed);
  for (std::size_t i = 0; i < spec.burn_in; ++i) gen.next(rng);
  std::vector<double> out(n);
  for (auto& v : out) v = gen.next(rng);
  return out;
}

/// Exogenous path whose generating model switches from `before` to `after`
/// starting at index `change_at` (0-based, after burn-in of `before`).
inline std::vector<double> simulate_exogenous_switch(const ExogenousSpec& before, const ExogenousSpec& after,
                                                     std::size_t n, std::size_t change_at, std::uint64_t seed) {
  if (n == 0) throw config_error("simulate_exogenous_switch: n must be at least 1");
  ArmaGenerator gen(before);
  Rng rng(seed);
  for (std::size_t i = 0; i < before.burn_in; ++i) gen.next(rng);
  std::vector<double> out(n);
  for (std::size_t t = 0; t < n; ++t) {
    if (t == change_at) gen.switch_to(after);
    out[t] = gen.next(rng);
  }
  return out;
}

/// Observations X_t in [0,1] and the exogenous input W_t, aligned by index.
struct SeriesPair {
  std::vector<double> x;
  std::vector<double> w;

  std::size_t size() const { return x.size(); }

  void validate() const {
    if (x.size() != w.size()) throw config_error("series: x and w must have equal length");
    for (double v : x)
      if (!(v >= 0.0 && v <= 1.0)) throw config_error("series: x values must lie in [0, 1]");
  }
};

struct SimulationOptions {
  /// History X_{-1}, ..., X_{-p}; defaults to 0.5 everywhere.
  std::optional<std::vector<double>> init_x;
  /// Leading steps simulated and discarded.
  std::size_t burn_in = 0;
  /// When set, receives mu_t for every recorded output.
  std::vector<double>* mu_trace = nullptr;
  /// Optional regime change of the output model itself: recorded outputs
  /// with index >= change_at follow this model (same p and q).
  const GBetaArModel* post_change_model = nullptr;
  std::size_t change_at = 0;
};

/// Simulates n outputs driven by `w`. The first q entries of `w` (plus any
/// burn-in) are history; the returned pair holds the last n aligned values.
inline SeriesPair simulate_gbeta_ar(const GBetaArModel& model, std::span<const double> w, std::size_t n,
                                    std::uint64_t seed, const SimulationOptions& opts = {}) {
  model.validate();
  const std::size_t q = model.exogenous ? static_cast<std::size_t>(model.q) : 0;
  const std::size_t p = static_cast<std::size_t>(model.p);
  const std::size_t steps = opts.burn_in + n;
  if (w.size() < steps + q) throw config_error("simulate_gbeta_ar: w is shorter than n + q (+ burn-in)");

  std::vector<double> x(p + steps, 0.5);
  if (opts.init_x) {
    if (opts.init_x->size() != p) throw config_error("simulate_gbeta_ar: init_x must have p values");
    for (std::size_t i = 0; i < p; ++i) {
      const double v = (*opts.init_x)[i];
      if (!(v > 0.0 && v < 1.0)) throw config_error("simulate_gbeta_ar: init_x values must lie in (0, 1)");
      x[p - 1 - i] = v;
    }
  }
  // Index t of x corresponds to index t - p + q of w.
  const std::size_t w_offset = w.size() - steps;  // >= q
  if (opts.mu_trace) opts.mu_trace->clear();
  if (opts.post_change_model) {
    opts.post_change_model->validate();
    if (opts.post_change_model->p != model.p || opts.post_change_model->q != model.q ||
        opts.post_change_model->exogenous != model.exogenous)
      throw config_error("simulate_gbeta_ar: post-change model must share the lag structure");
  }

  Rng rng(seed);
  for (std::size_t s = 0; s < steps; ++s) {
    const std::size_t t = p + s;
    const GBetaArModel& cur =
        (opts.post_change_model && s >= opts.burn_in + opts.change_at) ? *opts.post_change_model : model;
    double eta = cur.phi0;
    for (std::size_t i = 1; i <= p; ++i) eta += cur.phi[i - 1] * x_link(x[t - i], cur.x_clamp);
    if (cur.exogenous)
      for (std::size_t j = 0; j <= q; ++j) eta += cur.psi[j] * w_transform(w[w_offset + s - j], cur.w_clamp);
    const double mu = inverse_logit(eta);
    const double a = cur.tau * mu;
    const double b = cur.tau * (1.0 - mu);
    if (!(a > 0.0 && b > 0.0) || !std::isfinite(a) || !std::isfinite(b))
      throw numerical_error("simulate_gbeta_ar: degenerate Beta shape parameters");
    x[t] = beta_draw(rng, a, b);
    if (opts.mu_trace && s >= opts.burn_in) opts.mu_trace->push_back(mu);
  }

  SeriesPair out;
  out.x.assign(x.end() - static_cast<std::ptrdiff_t>(n), x.end());
  out.w.assign(w.begin() + static_cast<std::ptrdiff_t>(w_offset + opts.burn_in),
               w.begin() + static_cast<std::ptrdiff_t>(w_offset + steps));
  return out;
}

/// Convenience: draws the exogenous path from `exo` and simulates n outputs
/// after `burn_in` discarded steps. Substreams 0/1 of `seed` drive W and X.
inline SeriesPair simulate_pair(const GBetaArModel& model, const ExogenousSpec& exo, std::size_t n,
                                std::uint64_t seed, std::size_t burn_in = 500) {
  const std::size_t q = model.exogenous ? static_cast<std::size_t>(model.q) : 0;
  const auto w = simulate_exogenous(exo, n + burn_in + q, substream_seed(seed, 0));
  SimulationOptions opts;
  opts.burn_in = burn_in;
  return simulate_gbeta_ar(model, w, n, substream_seed(seed, 1), opts);
}

/// The null data-generating process used in the simulation studies:
/// p = 3, phi = (0.5; 0.1, 0.2, 0.2), psi_0 = 0.5, tau = 100, W AR(1) with -0.1.
inline GBetaArModel null_study_model() {
  GBetaArModel m;
  m.p = 3;
  m.q = 0;
  m.phi0 = 0.5;
  m.phi = {0.1, 0.2, 0.2};
  m.psi = {0.5};
  m.tau = 100.0;
  return m;
}

inline ExogenousSpec null_study_exogenous() { return ExogenousSpec{{-0.1}, {}, 1.0, 500}; }

}  // namespace betamon
