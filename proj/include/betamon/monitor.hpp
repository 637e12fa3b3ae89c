#pragma once

// Close-end sequential monitoring. A plan is calibrated once on the m
// training observations; each stream then owns a MonitorState and feeds
// observations m+1, ..., floor((N+1) m) one at a time.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "betamon/errors.hpp"
#include "betamon/statistic.hpp"
#include "betamon/threshold.hpp"

namespace betamon {

struct MonitorPlan {
  std::size_t m = 0;
  double n_ratio = 0.0;
  double gamma = 0.0;
  double delta = 1e-4;
  double alpha = 0.05;
  QuantileGrid grid;
  CovKernel kernel;
  Eigen::MatrixXd a_matrix;
  double threshold = 0.0;
  std::vector<double> baseline_ecdf;

  /// floor((N + 1) m), the last observation index examined.
  std::size_t horizon_end() const {
    return static_cast<std::size_t>(std::floor((n_ratio + 1.0) * static_cast<double>(m) + 1e-6));
  }

  void validate() const {
    grid.validate();
    const auto d = static_cast<Eigen::Index>(grid.size());
    if (m == 0) throw config_error("plan: m must be positive");
    if (!(n_ratio > 0.0)) throw config_error("plan: N must be positive");
    if (horizon_end() <= m) throw config_error("plan: horizon holds no monitoring step");
    check_weight_params(gamma, delta);
    if (!(alpha > 0.0 && alpha < 1.0)) throw config_error("plan: alpha must lie in (0, 1)");
    if (!(threshold > 0.0)) throw config_error("plan: threshold must be positive");
    if (a_matrix.rows() != d || a_matrix.cols() != d) throw config_error("plan: A has the wrong dimension");
    if (!is_positive_definite(a_matrix)) throw config_error("plan: A must be symmetric positive definite");
    if (baseline_ecdf.size() != grid.size()) throw config_error("plan: baseline ECDF has the wrong length");
    for (std::size_t i = 0; i < baseline_ecdf.size(); ++i) {
      if (!(baseline_ecdf[i] >= 0.0 && baseline_ecdf[i] <= 1.0)) throw config_error("plan: baseline ECDF out of range");
      if (i > 0 && baseline_ecdf[i] < baseline_ecdf[i - 1]) throw config_error("plan: baseline ECDF must be nondecreasing");
    }
  }
};

/// Freezes the baseline ECDF of `training` on an existing grid.
inline MonitorPlan make_plan(std::span<const double> training, const QuantileGrid& grid, CovKernel kernel,
                             Eigen::MatrixXd a_matrix, double threshold, double n_ratio, double gamma,
                             double delta, double alpha) {
  MonitorPlan plan;
  plan.m = training.size();
  plan.n_ratio = n_ratio;
  plan.gamma = gamma;
  plan.delta = delta;
  plan.alpha = alpha;
  plan.grid = grid;
  plan.kernel = std::move(kernel);
  plan.a_matrix = std::move(a_matrix);
  plan.threshold = threshold;
  plan.baseline_ecdf = baseline_ecdf(training, grid);
  plan.validate();
  return plan;
}

enum class WeightChoice { identity, inverse_gamma };
enum class SampleSource { training, auxiliary };

struct CalibrationConfig {
  double n_ratio = 0.0;
  double gamma = 0.0;
  double delta = 1e-4;
  double alpha = 0.05;
  std::size_t d = 10;
  std::size_t t_star = 50;
  WeightChoice weight = WeightChoice::identity;
  SampleSource grid_source = SampleSource::training;
  SampleSource kernel_source = SampleSource::training;
  std::size_t m_sim = 1000;
  std::size_t reps = 10000;
  std::uint64_t seed = 0;
  unsigned threads = 0;
};

inline Eigen::MatrixXd weight_matrix(WeightChoice choice, const CovKernel& kernel) {
  return choice == WeightChoice::identity ? identity_weight(kernel.dim()) : inverse_weight(kernel);
}

/// Builds the grid, estimates Gamma, simulates c(gamma, alpha) and freezes the
/// baseline. `auxiliary` is the long reference sample used when a source is
/// SampleSource::auxiliary.
inline MonitorPlan calibrate(std::span<const double> training, const CalibrationConfig& cfg,
                             std::span<const double> auxiliary = {}) {
  if (training.empty()) throw config_error("calibrate: empty training sample");
  for (double v : training)
    if (!(v >= 0.0 && v <= 1.0)) throw config_error("calibrate: training values must lie in [0, 1]");
  const bool needs_aux = cfg.grid_source == SampleSource::auxiliary || cfg.kernel_source == SampleSource::auxiliary;
  if (needs_aux && auxiliary.empty()) throw config_error("calibrate: auxiliary sample required but not supplied");

  const auto grid_sample = cfg.grid_source == SampleSource::training ? training : auxiliary;
  const auto kernel_sample = cfg.kernel_source == SampleSource::training ? training : auxiliary;
  QuantileGrid grid = make_quantile_grid(grid_sample, cfg.d);
  CovKernel kernel = estimate_gamma(kernel_sample, grid, cfg.t_star);
  Eigen::MatrixXd a = weight_matrix(cfg.weight, kernel);

  ThresholdRequest req;
  req.kernel = kernel;
  req.n_ratio = cfg.n_ratio;
  req.gammas = {cfg.gamma};
  req.alphas = {cfg.alpha};
  req.delta = cfg.delta;
  req.a_matrix = a;
  req.m_sim = cfg.m_sim;
  req.reps = cfg.reps;
  req.seed = cfg.seed;
  req.threads = cfg.threads;
  const ThresholdTable table = threshold_table(req);

  return make_plan(training, grid, std::move(kernel), std::move(a), table.c[0][0], cfg.n_ratio, cfg.gamma,
                   cfg.delta, cfg.alpha);
}

enum class MonitorStatus { running, alarmed, completed };
enum class Decision { proceed, alarm, horizon_end };

struct MonitorState {
  std::size_t k = 0;
  std::vector<std::size_t> counts;
  std::vector<std::pair<std::size_t, double>> trajectory;
  MonitorStatus status = MonitorStatus::running;
  std::optional<std::size_t> alarm_index;
};

inline MonitorState start_monitor(const MonitorPlan& plan) {
  MonitorState state;
  state.k = plan.m;
  state.counts.assign(plan.grid.size(), 0);
  return state;
}

/// Consumes observation k + 1. Alarm iff rho^2 D' A D >= threshold.
inline Decision step(MonitorState& state, const MonitorPlan& plan, double x_new) {
  if (state.status != MonitorStatus::running) throw std::logic_error("monitor: step after terminal status");
  if (!(x_new >= 0.0 && x_new <= 1.0)) throw config_error("monitor: observation outside [0, 1]");
  if (state.k >= plan.horizon_end()) throw std::logic_error("monitor: horizon already reached");

  ++state.k;
  const std::size_t d = plan.grid.size();
  std::vector<double> dm(d);
  for (std::size_t i = 0; i < d; ++i) {
    if (x_new <= plan.grid.x[i]) ++state.counts[i];
    dm[i] = detector_component(plan.m, state.k, plan.baseline_ecdf[i], state.counts[i]);
  }
  const double s = static_cast<double>(state.k) / static_cast<double>(plan.m);
  const double quad = quad_stat(dm, s, plan.gamma, plan.delta, plan.a_matrix);
  state.trajectory.emplace_back(state.k, quad);

  if (quad >= plan.threshold) {
    state.status = MonitorStatus::alarmed;
    state.alarm_index = state.k;
    return Decision::alarm;
  }
  if (state.k >= plan.horizon_end()) {
    state.status = MonitorStatus::completed;
    return Decision::horizon_end;
  }
  return Decision::proceed;
}

struct DetectionReport {
  std::optional<std::size_t> alarm_index;
  std::size_t horizon_end_index = 0;
  double gamma = 0.0;
  double alpha = 0.0;
  double threshold = 0.0;
  std::vector<std::pair<std::size_t, double>> trajectory;
  /// Stream ended before both an alarm and the horizon.
  bool truncated = false;
  std::optional<std::size_t> true_change;
  std::optional<long long> delay;

  double max_statistic() const {
    double best = 0.0;
    for (const auto& [k, q] : trajectory) best = std::max(best, q);
    return best;
  }
};

/// Feeds `stream` (observations m+1, m+2, ...) until alarm, horizon or end of
/// input. `true_change` is the index of the last pre-change observation.
inline DetectionReport run_to_completion(const MonitorPlan& plan, std::span<const double> stream,
                                         std::optional<std::size_t> true_change = std::nullopt) {
  plan.validate();
  MonitorState state = start_monitor(plan);
  for (double x : stream) {
    if (step(state, plan, x) != Decision::proceed) break;
  }
  DetectionReport report;
  report.alarm_index = state.alarm_index;
  report.horizon_end_index = plan.horizon_end();
  report.gamma = plan.gamma;
  report.alpha = plan.alpha;
  report.threshold = plan.threshold;
  report.truncated = state.status == MonitorStatus::running;
  report.trajectory = std::move(state.trajectory);
  report.true_change = true_change;
  if (true_change && report.alarm_index)
    report.delay = static_cast<long long>(*report.alarm_index) - static_cast<long long>(*true_change);
  return report;
}

/// Sup of the weighted statistic over the whole horizon (no stopping); the
/// quantity compared against c(gamma, alpha) in size experiments.
inline double sup_statistic(const MonitorPlan& plan, std::span<const double> stream) {
  MonitorState state = start_monitor(plan);
  double best = 0.0;
  const std::size_t d = plan.grid.size();
  std::vector<double> dm(d);
  for (double x : stream) {
    if (state.k >= plan.horizon_end()) break;
    ++state.k;
    for (std::size_t i = 0; i < d; ++i) {
      if (x <= plan.grid.x[i]) ++state.counts[i];
      dm[i] = detector_component(plan.m, state.k, plan.baseline_ecdf[i], state.counts[i]);
    }
    const double rho = weight(static_cast<double>(state.k) / static_cast<double>(plan.m), plan.gamma, plan.delta);
    best = std::max(best, rho * rho * quadratic_form(dm, plan.a_matrix));
  }
  return best;
}

}  // namespace betamon
