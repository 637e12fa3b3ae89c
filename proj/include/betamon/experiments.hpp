#pragma once

// Experiment configuration and runners: null-size calibration, power and
// detection delay, threshold tables, fit sweeps and the monthly-data
// pipeline (detrend, sweep, calibrate, monitor).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "betamon/errors.hpp"
#include "betamon/inference.hpp"
#include "betamon/io.hpp"
#include "betamon/model.hpp"
#include "betamon/monitor.hpp"
#include "betamon/parallel.hpp"
#include "betamon/random.hpp"
#include "betamon/statistic.hpp"
#include "betamon/threshold.hpp"

namespace betamon {

enum class ExperimentKind { null_size, power, threshold_table, fit_sweep, monitor_run };

inline const char* to_string(ExperimentKind k) {
  switch (k) {
    case ExperimentKind::null_size: return "null_size";
    case ExperimentKind::power: return "power";
    case ExperimentKind::threshold_table: return "threshold_table";
    case ExperimentKind::fit_sweep: return "fit_sweep";
    case ExperimentKind::monitor_run: return "monitor_run";
  }
  return "?";
}

inline ExperimentKind parse_kind(const std::string& s) {
  for (auto k : {ExperimentKind::null_size, ExperimentKind::power, ExperimentKind::threshold_table,
                 ExperimentKind::fit_sweep, ExperimentKind::monitor_run})
    if (s == to_string(k)) return k;
  throw config_error("unknown experiment kind '" + s + "'");
}

struct DgpConfig {
  GBetaArModel model;
  ExogenousSpec exogenous;
  std::size_t burn_in = 500;
  /// Post-change regime (power experiments). Either part may be absent.
  std::optional<ExogenousSpec> post_exogenous;
  std::optional<GBetaArModel> post_model;

  friend bool operator==(const DgpConfig&, const DgpConfig&) = default;
};

struct MonitoringConfig {
  std::vector<std::size_t> m;  // one entry per experiment arm
  double n_ratio = 0.0;
  std::size_t d = 0;
  std::vector<double> gammas;
  std::vector<double> alphas;
  double delta = 1e-4;
  WeightChoice weight = WeightChoice::identity;
  std::size_t t_star = 50;
  std::size_t reference_length = 10000;
  std::size_t m_sim = 1000;
  std::size_t threshold_reps = 10000;
  std::size_t reps = 5000;
  /// Last pre-change observation index (1-based) for power runs.
  std::optional<std::size_t> change_index;

  friend bool operator==(const MonitoringConfig&, const MonitoringConfig&) = default;
};

struct SweepConfig {
  std::size_t n = 0;
  std::vector<int> p_range;
  std::vector<int> q_range;
  bool include_no_exog = false;

  friend bool operator==(const SweepConfig&, const SweepConfig&) = default;
};

struct PipelineConfig {
  std::string input;
  std::string train_end;  // YYYY-MM, last training month
  std::vector<int> p_range;
  std::vector<int> q_range;
  bool include_no_exog = true;
  std::optional<std::size_t> t_star;  // default min(50, m / 20)

  friend bool operator==(const PipelineConfig&, const PipelineConfig&) = default;
};

struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::null_size;
  std::uint64_t seed = 0;
  unsigned threads = 0;
  std::optional<DgpConfig> dgp;
  std::optional<MonitoringConfig> monitoring;
  std::optional<SweepConfig> sweep;
  std::optional<PipelineConfig> pipeline;

  friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;

  const DgpConfig& need_dgp() const {
    if (!dgp) throw config_error(std::string("experiment '") + to_string(kind) + "' requires a 'dgp' section");
    return *dgp;
  }
  const MonitoringConfig& need_monitoring() const {
    if (!monitoring)
      throw config_error(std::string("experiment '") + to_string(kind) + "' requires a 'monitoring' section");
    return *monitoring;
  }
};

// ------------------------------------------------------------- config io --

inline const char* to_string(WeightChoice w) { return w == WeightChoice::identity ? "identity" : "inverse_gamma"; }

inline WeightChoice parse_weight(const std::string& s) {
  if (s == "identity") return WeightChoice::identity;
  if (s == "inverse_gamma") return WeightChoice::inverse_gamma;
  throw config_error("weight must be 'identity' or 'inverse_gamma', got '" + s + "'");
}

inline void to_json(json& j, const DgpConfig& d) {
  j = json{{"model", d.model}, {"exogenous", d.exogenous}, {"burn_in", d.burn_in}};
  if (d.post_exogenous || d.post_model) {
    json post = json::object();
    if (d.post_exogenous) post["exogenous"] = *d.post_exogenous;
    if (d.post_model) post["model"] = *d.post_model;
    j["post_change"] = std::move(post);
  }
}
inline void from_json(const json& j, DgpConfig& d) {
  d = DgpConfig{};
  d.model = require(j, "model").get<GBetaArModel>();
  d.exogenous = require(j, "exogenous").get<ExogenousSpec>();
  d.burn_in = j.value("burn_in", std::size_t{500});
  if (j.contains("post_change")) {
    const json& post = j.at("post_change");
    if (post.contains("exogenous")) d.post_exogenous = post.at("exogenous").get<ExogenousSpec>();
    if (post.contains("model")) d.post_model = post.at("model").get<GBetaArModel>();
  }
}

inline void to_json(json& j, const MonitoringConfig& m) {
  j = json{{"d", m.d},
           {"gammas", m.gammas},
           {"alphas", m.alphas},
           {"delta", m.delta},
           {"weight", to_string(m.weight)},
           {"t_star", m.t_star},
           {"reference_length", m.reference_length},
           {"m_sim", m.m_sim},
           {"threshold_reps", m.threshold_reps},
           {"reps", m.reps}};
  if (!m.m.empty()) {
    j["m"] = m.m;
    j["n_ratio"] = m.n_ratio;
  }
  if (m.change_index) j["change_index"] = *m.change_index;
}

/// m, N, gamma and alpha have no defaults and must be stated. With
/// `data_driven_window` (the monthly pipeline) m and N come from the data
/// and must be absent.
inline MonitoringConfig monitoring_from_json(const json& j, bool data_driven_window) {
  MonitoringConfig m;
  if (data_driven_window) {
    if (j.contains("m") || j.contains("n_ratio"))
      throw config_error("monitoring: m and n_ratio are set by the training window for monitor_run");
  } else {
    const json& mj = require(j, "m");
    m.m = mj.is_array() ? mj.get<std::vector<std::size_t>>() : std::vector<std::size_t>{mj.get<std::size_t>()};
    if (m.m.empty()) throw config_error("monitoring: m must be nonempty");
    m.n_ratio = require(j, "n_ratio").get<double>();
    if (!(m.n_ratio > 0.0)) throw config_error("monitoring: n_ratio must be positive");
  }
  m.gammas = require(j, "gammas").get<std::vector<double>>();
  m.alphas = require(j, "alphas").get<std::vector<double>>();
  if (m.gammas.empty() || m.alphas.empty()) throw config_error("monitoring: gammas and alphas must be nonempty");
  m.d = require(j, "d").get<std::size_t>();
  m.delta = j.value("delta", 1e-4);
  for (double g : m.gammas) check_weight_params(g, m.delta);
  for (double a : m.alphas)
    if (!(a > 0.0 && a < 1.0)) throw config_error("monitoring: alpha must lie in (0, 1)");
  m.weight = parse_weight(j.value("weight", std::string("identity")));
  m.t_star = j.value("t_star", std::size_t{50});
  m.reference_length = j.value("reference_length", std::size_t{10000});
  m.m_sim = j.value("m_sim", std::size_t{1000});
  m.threshold_reps = j.value("threshold_reps", std::size_t{10000});
  m.reps = j.value("reps", std::size_t{5000});
  if (j.contains("change_index")) m.change_index = j.at("change_index").get<std::size_t>();
  return m;
}

inline void to_json(json& j, const SweepConfig& s) {
  j = json{{"n", s.n}, {"p_range", s.p_range}, {"q_range", s.q_range}, {"include_no_exog", s.include_no_exog}};
}
inline void from_json(const json& j, SweepConfig& s) {
  s.n = require(j, "n").get<std::size_t>();
  s.p_range = require(j, "p_range").get<std::vector<int>>();
  s.q_range = require(j, "q_range").get<std::vector<int>>();
  s.include_no_exog = j.value("include_no_exog", false);
}

inline void to_json(json& j, const PipelineConfig& p) {
  j = json{{"input", p.input},
           {"train_end", p.train_end},
           {"p_range", p.p_range},
           {"q_range", p.q_range},
           {"include_no_exog", p.include_no_exog}};
  if (p.t_star) j["t_star"] = *p.t_star;
}
inline void from_json(const json& j, PipelineConfig& p) {
  p.input = j.value("input", std::string{});
  p.train_end = require(j, "train_end").get<std::string>();
  p.p_range = require(j, "p_range").get<std::vector<int>>();
  p.q_range = require(j, "q_range").get<std::vector<int>>();
  p.include_no_exog = j.value("include_no_exog", true);
  if (j.contains("t_star")) p.t_star = j.at("t_star").get<std::size_t>();
}

inline json config_to_json(const ExperimentConfig& c) {
  json j = json{{"kind", to_string(c.kind)}, {"seed", c.seed}, {"threads", c.threads}};
  if (c.dgp) j["dgp"] = *c.dgp;
  if (c.monitoring) j["monitoring"] = *c.monitoring;
  if (c.sweep) j["sweep"] = *c.sweep;
  if (c.pipeline) j["pipeline"] = *c.pipeline;
  return j;
}

inline ExperimentConfig config_from_json(const json& j) {
  ExperimentConfig c;
  try {
    c.kind = parse_kind(require(j, "kind").get<std::string>());
    c.seed = j.value("seed", std::uint64_t{0});
    c.threads = j.value("threads", 0u);
    if (j.contains("dgp")) c.dgp = j.at("dgp").get<DgpConfig>();
    if (j.contains("monitoring"))
      c.monitoring = monitoring_from_json(j.at("monitoring"), c.kind == ExperimentKind::monitor_run);
    if (j.contains("sweep")) c.sweep = j.at("sweep").get<SweepConfig>();
    if (j.contains("pipeline")) c.pipeline = j.at("pipeline").get<PipelineConfig>();
  } catch (const json::exception& e) {
    throw config_error(std::string("config: ") + e.what());
  }
  return c;
}

/// Reduced replication counts for quick runs.
inline void apply_fast_profile(ExperimentConfig& c) {
  if (!c.monitoring) return;
  c.monitoring->threshold_reps = std::min<std::size_t>(c.monitoring->threshold_reps, 1000);
  c.monitoring->reps = std::min<std::size_t>(c.monitoring->reps, 500);
}

// ------------------------------------------------------------ reference --

/// Grid, kernel, weight matrix and thresholds from one long simulation of
/// the (pre-change) data-generating process.
struct Reference {
  QuantileGrid grid;
  CovKernel kernel;
  Eigen::MatrixXd a_matrix;
  ThresholdTable table;
};

inline ThresholdRequest make_threshold_request(const MonitoringConfig& mon, const CovKernel& kernel,
                                               const Eigen::MatrixXd& a, std::uint64_t seed, unsigned threads) {
  ThresholdRequest req;
  req.kernel = kernel;
  req.n_ratio = mon.n_ratio;
  req.gammas = mon.gammas;
  req.alphas = mon.alphas;
  req.delta = mon.delta;
  req.a_matrix = a;
  req.m_sim = mon.m_sim;
  req.reps = mon.threshold_reps;
  req.seed = seed;
  req.threads = threads;
  return req;
}

inline Reference build_reference(const ExperimentConfig& cfg) {
  const DgpConfig& dgp = cfg.need_dgp();
  const MonitoringConfig& mon = cfg.need_monitoring();
  const SeriesPair ref = simulate_pair(dgp.model, dgp.exogenous, mon.reference_length, substream_seed(cfg.seed, 0),
                                       dgp.burn_in);
  Reference r;
  r.grid = make_quantile_grid(ref.x, mon.d);
  r.kernel = estimate_gamma(ref.x, r.grid, mon.t_star);
  r.a_matrix = weight_matrix(mon.weight, r.kernel);
  r.table = threshold_table(make_threshold_request(mon, r.kernel, r.a_matrix, substream_seed(cfg.seed, 1), cfg.threads));
  return r;
}

// ------------------------------------------------------------ null size --

struct SizeRow {
  std::size_t m = 0;
  double gamma = 0.0;
  double alpha = 0.0;
  std::size_t rejections = 0;
  std::size_t reps = 0;
  double rate = 0.0;
};

struct NullSizeResult {
  Reference reference;
  std::vector<SizeRow> rows;
  std::size_t failures = 0;
};

/// For every (m, gamma, alpha): the fraction of null replications whose sup
/// over the horizon of rho^2 D' A D reaches c(gamma, alpha). A supplied table
/// replaces the simulated thresholds.
inline NullSizeResult run_null_size(const ExperimentConfig& cfg, std::optional<ThresholdTable> override_table = {}) {
  const DgpConfig& dgp = cfg.need_dgp();
  const MonitoringConfig& mon = cfg.need_monitoring();
  NullSizeResult out;
  if (override_table) {
    const SeriesPair ref = simulate_pair(dgp.model, dgp.exogenous, mon.reference_length,
                                         substream_seed(cfg.seed, 0), dgp.burn_in);
    out.reference.grid = make_quantile_grid(ref.x, mon.d);
    out.reference.kernel = estimate_gamma(ref.x, out.reference.grid, mon.t_star);
    out.reference.a_matrix = weight_matrix(mon.weight, out.reference.kernel);
    out.reference.table = *override_table;
  } else {
    out.reference = build_reference(cfg);
  }
  const Reference& ref = out.reference;
  const std::size_t ng = mon.gammas.size();

  for (std::size_t mi = 0; mi < mon.m.size(); ++mi) {
    const std::size_t m = mon.m[mi];
    const std::uint64_t arm_seed = substream_seed(cfg.seed, 2 + mi);
    // sup statistic per replication and gamma; NaN marks a failed replication.
    std::vector<std::vector<double>> sups(mon.reps, std::vector<double>(ng, 0.0));
    std::vector<char> failed(mon.reps, 0);
    parallel_for(mon.reps, cfg.threads, [&](std::size_t r) {
      try {
        MonitorPlan probe;
        probe.m = m;
        probe.n_ratio = mon.n_ratio;
        const std::size_t total = probe.horizon_end();
        const SeriesPair data = simulate_pair(dgp.model, dgp.exogenous, total, substream_seed(arm_seed, r), dgp.burn_in);
        const std::span<const double> xs(data.x);
        for (std::size_t g = 0; g < ng; ++g) {
          const MonitorPlan plan = make_plan(xs.first(m), ref.grid, ref.kernel, ref.a_matrix, 1.0, mon.n_ratio,
                                             mon.gammas[g], mon.delta, mon.alphas.front());
          sups[r][g] = sup_statistic(plan, xs.subspan(m));
        }
      } catch (const std::exception&) {
        failed[r] = 1;
      }
    });
    std::size_t ok = 0;
    for (char f : failed) ok += f ? 0 : 1;
    out.failures += mon.reps - ok;
    for (std::size_t g = 0; g < ng; ++g)
      for (std::size_t a = 0; a < mon.alphas.size(); ++a) {
        SizeRow row;
        row.m = m;
        row.gamma = mon.gammas[g];
        row.alpha = mon.alphas[a];
        row.reps = ok;
        const double c = ref.table.at(row.gamma, row.alpha);
        for (std::size_t r = 0; r < mon.reps; ++r)
          if (!failed[r] && sups[r][g] >= c) ++row.rejections;
        row.rate = ok ? static_cast<double>(row.rejections) / static_cast<double>(ok) : 0.0;
        out.rows.push_back(row);
      }
  }
  return out;
}

// ---------------------------------------------------------------- power --

struct PowerRow {
  double gamma = 0.0;
  double alpha = 0.0;
  std::size_t reps = 0;
  std::size_t detections = 0;
  double rate = 0.0;
  /// Mean of alarm_index - change_index over replications with an alarm.
  double mean_delay = 0.0;
  /// Alarms raised at or before the change.
  std::size_t early_alarms = 0;
};

struct PowerResult {
  Reference reference;
  std::vector<PowerRow> rows;
  std::size_t failures = 0;
};

/// One stream of floor((N + 1) m) outputs whose exogenous input (and,
/// optionally, output model) switches after observation change_index.
inline SeriesPair simulate_change_stream(const DgpConfig& dgp, std::size_t total, std::optional<std::size_t> change_index,
                                         std::uint64_t seed) {
  const std::size_t q = dgp.model.exogenous ? static_cast<std::size_t>(dgp.model.q) : 0;
  const std::size_t lead = dgp.burn_in + q;
  const std::size_t change = change_index.value_or(total);
  const std::vector<double> w =
      dgp.post_exogenous && change_index
          ? simulate_exogenous_switch(dgp.exogenous, *dgp.post_exogenous, total + lead, lead + change,
                                      substream_seed(seed, 0))
          : simulate_exogenous(dgp.exogenous, total + lead, substream_seed(seed, 0));
  SimulationOptions opts;
  opts.burn_in = dgp.burn_in;
  if (dgp.post_model && change_index) {
    opts.post_change_model = &*dgp.post_model;
    opts.change_at = change;
  }
  return simulate_gbeta_ar(dgp.model, w, total, substream_seed(seed, 1), opts);
}

inline PowerResult run_power(const ExperimentConfig& cfg) {
  const DgpConfig& dgp = cfg.need_dgp();
  const MonitoringConfig& mon = cfg.need_monitoring();
  if (mon.m.size() != 1) throw config_error("power: exactly one m is required");
  const std::size_t m = mon.m.front();
  MonitorPlan probe;
  probe.m = m;
  probe.n_ratio = mon.n_ratio;
  const std::size_t total = probe.horizon_end();
  const bool has_change = dgp.post_exogenous || dgp.post_model;
  if (has_change) {
    if (!mon.change_index) throw config_error("power: change_index is required with a post-change regime");
    if (!(*mon.change_index > m && *mon.change_index <= total))
      throw config_error("power: change_index must satisfy m < change_index <= floor((N + 1) m)");
  }

  PowerResult out;
  out.reference = build_reference(cfg);
  const Reference& ref = out.reference;
  const std::size_t ng = mon.gammas.size(), na = mon.alphas.size();
  // alarm index per replication and (gamma, alpha); 0 = no alarm.
  std::vector<std::vector<std::size_t>> alarms(mon.reps, std::vector<std::size_t>(ng * na, 0));
  std::vector<char> failed(mon.reps, 0);
  const std::optional<std::size_t> change = has_change ? mon.change_index : std::nullopt;
  const std::uint64_t arm_seed = substream_seed(cfg.seed, 2);
  parallel_for(mon.reps, cfg.threads, [&](std::size_t r) {
    try {
      const SeriesPair data = simulate_change_stream(dgp, total, change, substream_seed(arm_seed, r));
      const std::span<const double> xs(data.x);
      for (std::size_t g = 0; g < ng; ++g)
        for (std::size_t a = 0; a < na; ++a) {
          const MonitorPlan plan = make_plan(xs.first(m), ref.grid, ref.kernel, ref.a_matrix,
                                             ref.table.c[g][a], mon.n_ratio, mon.gammas[g], mon.delta, mon.alphas[a]);
          const DetectionReport rep = run_to_completion(plan, xs.subspan(m));
          alarms[r][g * na + a] = rep.alarm_index.value_or(0);
        }
    } catch (const std::exception&) {
      failed[r] = 1;
    }
  });
  std::size_t ok = 0;
  for (char f : failed) ok += f ? 0 : 1;
  out.failures = mon.reps - ok;
  const auto reference_index = static_cast<double>(change.value_or(m));
  for (std::size_t g = 0; g < ng; ++g)
    for (std::size_t a = 0; a < na; ++a) {
      PowerRow row;
      row.gamma = mon.gammas[g];
      row.alpha = mon.alphas[a];
      row.reps = ok;
      double delay_sum = 0.0;
      for (std::size_t r = 0; r < mon.reps; ++r) {
        const std::size_t k = alarms[r][g * na + a];
        if (failed[r] || k == 0) continue;
        ++row.detections;
        delay_sum += static_cast<double>(k) - reference_index;
        if (change && k <= *change) ++row.early_alarms;
      }
      row.rate = ok ? static_cast<double>(row.detections) / static_cast<double>(ok) : 0.0;
      row.mean_delay = row.detections ? delay_sum / static_cast<double>(row.detections) : 0.0;
      out.rows.push_back(row);
    }
  return out;
}

// ------------------------------------------------------------ fit sweep --

struct FitSweepExperiment {
  SeriesPair data;
  SweepResult sweep;
};

inline FitSweepExperiment run_fit_sweep(const ExperimentConfig& cfg) {
  const DgpConfig& dgp = cfg.need_dgp();
  if (!cfg.sweep) throw config_error("fit_sweep requires a 'sweep' section");
  FitSweepExperiment out;
  out.data = simulate_pair(dgp.model, dgp.exogenous, cfg.sweep->n, substream_seed(cfg.seed, 0), dgp.burn_in);
  SweepOptions so;
  so.include_no_exog = cfg.sweep->include_no_exog;
  so.threads = cfg.threads;
  out.sweep = model_selection_sweep(out.data, cfg.sweep->p_range, cfg.sweep->q_range, so);
  return out;
}

// ------------------------------------------------------- monthly pipeline --

struct PipelineReport {
  std::size_t m = 0;
  double n_ratio = 0.0;
  DetrendModel detrend;
  /// Training mean of the raw series, added back to the detrended residuals
  /// so the modelled series stays on the unit interval.
  double level = 0.0;
  std::vector<double> series;  // detrended + level, all rows
  /// Rows whose detrended value fell outside [0, 1] and was clipped.
  std::vector<std::size_t> clipped_rows;
  SweepResult sweep;
  QuantileGrid grid;
  CovKernel kernel;
  ThresholdTable table;
  std::vector<DetectionReport> reports;  // per (gamma, alpha), gamma-major
  std::vector<std::string> dates;
  std::vector<double> observed;
  /// Fitted conditional means re-trended to the raw scale; NaN before the
  /// conditioning start.
  std::vector<double> fitted;
};

inline std::string month_label(int year, int month) {
  return std::to_string(year) + "-" + (month < 10 ? "0" : "") + std::to_string(month);
}

inline PipelineReport run_real_pipeline(const MonthlySeries& data, const ExperimentConfig& cfg) {
  if (!cfg.pipeline) throw config_error("monitor_run requires a 'pipeline' section");
  const PipelineConfig& pc = *cfg.pipeline;
  const MonitoringConfig& mon = cfg.need_monitoring();

  int ty = 0, tm = 0;
  parse_month(pc.train_end, ty, tm, "pipeline.train_end");
  std::size_t m = 0;
  for (std::size_t i = 0; i < data.rows.size(); ++i)
    if (data.rows[i].year == ty && data.rows[i].month == tm) m = i + 1;
  if (m == 0) throw config_error("pipeline: train_end " + pc.train_end + " not found in the data");
  if (m >= data.rows.size()) throw config_error("pipeline: no observations after the training window");

  PipelineReport rep;
  rep.m = m;
  rep.n_ratio = static_cast<double>(data.rows.size() - m) / static_cast<double>(m);

  std::vector<double> raw;
  std::vector<int> years, months;
  for (const auto& row : data.rows) {
    raw.push_back(row.value);
    years.push_back(row.year);
    months.push_back(row.month);
    rep.dates.push_back(month_label(row.year, row.month));
  }
  rep.observed = raw;
  const auto train = [&](const auto& v) { return std::span(v).first(m); };
  rep.detrend = detrend(train(raw), train(years), train(months)).model;
  const std::vector<double> resid = apply_detrend(rep.detrend, raw, years, months);
  for (std::size_t i = 0; i < m; ++i) rep.level += raw[i];
  rep.level /= static_cast<double>(m);
  rep.series.resize(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    rep.series[i] = resid[i] + rep.level;
    if (!std::isfinite(rep.series[i])) throw config_error("row " + std::to_string(i + 1) + ": non-finite detrended value");
    if (rep.series[i] < 0.0 || rep.series[i] > 1.0) {
      rep.series[i] = std::clamp(rep.series[i], 0.0, 1.0);
      rep.clipped_rows.push_back(i + 1);
    }
  }

  const bool has_exog = !data.exogenous_names.empty();
  SeriesPair pair;
  pair.x.assign(rep.series.begin(), rep.series.begin() + static_cast<std::ptrdiff_t>(m));
  for (std::size_t i = 0; i < m; ++i) pair.w.push_back(has_exog ? data.rows[i].exogenous[0] : 0.0);
  SweepOptions so;
  so.include_no_exog = pc.include_no_exog || !has_exog;
  so.threads = cfg.threads;
  const std::vector<int> no_q;
  rep.sweep = model_selection_sweep(pair, pc.p_range, has_exog ? std::span<const int>(pc.q_range) : std::span<const int>(no_q), so);

  rep.fitted.assign(raw.size(), std::numeric_limits<double>::quiet_NaN());
  if (rep.sweep.best) {
    const FitResult& best = *rep.sweep.cells[*rep.sweep.best].result;
    const auto mu = conditional_means(best.model, pair, best.start);
    for (std::size_t i = 0; i < mu.size(); ++i) {
      const std::size_t t = best.start + i;
      rep.fitted[t] = mu[i] - rep.level + rep.detrend.fitted(years[t], months[t]);
    }
  }

  const std::span<const double> training(rep.series.data(), m);
  const std::size_t t_star = pc.t_star.value_or(std::max<std::size_t>(1, std::min<std::size_t>(50, m / 20)));
  rep.grid = make_quantile_grid(training, mon.d);
  rep.kernel = estimate_gamma(training, rep.grid, t_star);
  const Eigen::MatrixXd a = weight_matrix(mon.weight, rep.kernel);
  MonitoringConfig window = mon;
  window.n_ratio = rep.n_ratio;
  rep.table = threshold_table(make_threshold_request(window, rep.kernel, a, substream_seed(cfg.seed, 1), cfg.threads));

  const std::span<const double> stream(rep.series.data() + m, rep.series.size() - m);
  for (std::size_t g = 0; g < mon.gammas.size(); ++g)
    for (std::size_t al = 0; al < mon.alphas.size(); ++al) {
      const MonitorPlan plan = make_plan(training, rep.grid, rep.kernel, a, rep.table.c[g][al], rep.n_ratio,
                                         mon.gammas[g], mon.delta, mon.alphas[al]);
      rep.reports.push_back(run_to_completion(plan, stream));
    }
  return rep;
}

// -------------------------------------------------------------- reports --

inline json to_json(const NullSizeResult& r) {
  json rows = json::array();
  for (const auto& s : r.rows)
    rows.push_back({{"m", s.m}, {"gamma", s.gamma}, {"alpha", s.alpha}, {"rejections", s.rejections},
                    {"reps", s.reps}, {"rate", s.rate}});
  return json{{"grid", r.reference.grid}, {"kernel", r.reference.kernel},
              {"thresholds", r.reference.table}, {"rows", rows}, {"failures", r.failures}};
}

inline json to_json(const PowerResult& r) {
  json rows = json::array();
  for (const auto& p : r.rows)
    rows.push_back({{"gamma", p.gamma}, {"alpha", p.alpha}, {"reps", p.reps}, {"detections", p.detections},
                    {"rate", p.rate}, {"mean_delay", p.mean_delay}, {"early_alarms", p.early_alarms}});
  return json{{"grid", r.reference.grid}, {"kernel", r.reference.kernel},
              {"thresholds", r.reference.table}, {"rows", rows}, {"failures", r.failures}};
}

inline json sweep_to_json(const SweepResult& s) {
  json cells = json::array();
  for (const auto& c : s.cells) {
    json cell{{"p", c.p}, {"q", c.q}, {"exogenous", c.exogenous}};
    if (c.result) cell["fit"] = *c.result;
    else cell["error"] = c.error;
    cells.push_back(std::move(cell));
  }
  json j{{"cells", cells}, {"start", s.start}};
  j["best"] = s.best ? json(*s.best) : json(nullptr);
  return j;
}

inline json to_json(const PipelineReport& r) {
  json reports = json::array();
  for (const auto& d : r.reports) {
    json j = d;
    if (d.alarm_index) j["alarm_date"] = r.dates[*d.alarm_index - 1];
    reports.push_back(std::move(j));
  }
  return json{{"m", r.m},          {"n_ratio", r.n_ratio}, {"detrend", r.detrend}, {"level", r.level},
              {"clipped_rows", r.clipped_rows}, {"sweep", sweep_to_json(r.sweep)}, {"grid", r.grid}, {"kernel", r.kernel},
              {"thresholds", r.table}, {"reports", reports}};
}

inline void write_size_csv(std::ostream& os, const NullSizeResult& r) {
  os << "m,gamma,alpha,rejections,reps,rate\n";
  for (const auto& s : r.rows)
    os << s.m << "," << Num{s.gamma} << "," << Num{s.alpha} << "," << s.rejections << "," << s.reps << "," << Num{s.rate} << "\n";
}

inline void write_power_csv(std::ostream& os, const PowerResult& r) {
  os << "gamma,alpha,reps,detections,rate,mean_delay,early_alarms\n";
  for (const auto& p : r.rows)
    os << Num{p.gamma} << "," << Num{p.alpha} << "," << p.reps << "," << p.detections << "," << Num{p.rate} << "," << Num{p.mean_delay}
       << "," << p.early_alarms << "\n";
}

inline void write_sweep_csv(std::ostream& os, const SweepResult& s) {
  os << "p,q,exogenous,aic,mae,loglik,converged,error\n";
  for (const auto& c : s.cells) {
    os << c.p << "," << c.q << "," << (c.exogenous ? 1 : 0) << ",";
    if (c.result)
      os << Num{c.result->aic} << "," << Num{c.result->mae} << "," << Num{c.result->loglik} << "," << (c.result->converged ? 1 : 0) << ",";
    else
      os << ",,,0," << c.error;
    os << "\n";
  }
}

inline void write_fitted_csv(std::ostream& os, const PipelineReport& r) {
  os << "date,observed,detrended,fitted\n";
  for (std::size_t i = 0; i < r.dates.size(); ++i) {
    os << r.dates[i] << "," << r.observed[i] << "," << r.series[i] << ",";
    if (!std::isnan(r.fitted[i])) os << r.fitted[i];
    os << "\n";
  }
}

}  // namespace betamon
