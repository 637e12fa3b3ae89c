// betamon: command-line front end over the betamon library.
//
// Every subcommand writes its artifacts into the output directory (--out,
// or $BETAMON_OUT when --out is absent, else ./out). Exit codes: 0 success,
// 2 configuration error, 3 numerical failure.

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "betamon/errors.hpp"
#include "betamon/experiments.hpp"
#include "betamon/inference.hpp"
#include "betamon/io.hpp"
#include "betamon/model.hpp"
#include "betamon/monitor.hpp"
#include "betamon/statistic.hpp"
#include "betamon/threshold.hpp"

namespace fs = std::filesystem;
using namespace betamon;

namespace {

struct Common {
  std::string out;
  std::optional<std::uint64_t> seed;
  unsigned threads = 0;
  bool fast = false;
  std::string config;
  std::string input;
};

fs::path out_dir(const Common& c) {
  fs::path dir = !c.out.empty() ? fs::path(c.out) : (std::getenv("BETAMON_OUT") ? fs::path(std::getenv("BETAMON_OUT")) : fs::path("out"));
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw config_error("cannot create output directory " + dir.string() + ": " + ec.message());
  return dir;
}

std::uint64_t need_seed(const Common& c) {
  if (!c.seed) throw config_error("--seed is required for this command");
  return *c.seed;
}

ExperimentConfig load_config(const Common& c) {
  if (c.config.empty()) throw config_error("--config is required for this command");
  ExperimentConfig cfg = config_from_json(read_json_file(c.config));
  if (c.seed) cfg.seed = *c.seed;
  if (c.threads) cfg.threads = c.threads;
  if (c.fast) apply_fast_profile(cfg);
  return cfg;
}

void write_json(const fs::path& path, const json& j) { write_text_file(path.string(), j.dump(2) + "\n"); }

template <class F>
std::string to_text(F&& f) {
  std::ostringstream os;
  f(os);
  return os.str();
}

std::vector<double> input_x(const Common& c) {
  if (c.input.empty()) throw config_error("--input is required for this command");
  return load_series(c.input).x;
}

// ------------------------------------------------------------ commands --

int cmd_simulate(const Common& c, std::size_t n) {
  ExperimentConfig cfg = load_config(c);
  cfg.seed = need_seed(c);
  const DgpConfig& dgp = cfg.need_dgp();
  const SeriesPair s = simulate_pair(dgp.model, dgp.exogenous, n, cfg.seed, dgp.burn_in);
  const fs::path dir = out_dir(c);
  write_text_file((dir / "series.csv").string(), to_text([&](std::ostream& os) {
                    os << "x,w\n";
                    for (std::size_t i = 0; i < s.size(); ++i) os << Num{s.x[i]} << "," << Num{s.w[i]} << "\n";
                  }));
  write_json(dir / "simulate.json", json{{"config", config_to_json(cfg)}, {"n", n}});
  return 0;
}

int cmd_fit(const Common& c, int p, int q, bool no_exog) {
  if (c.input.empty()) throw config_error("--input is required for this command");
  const SeriesPair data = load_series(c.input);
  FitOptions fo;
  fo.exogenous = !no_exog;
  const FitResult r = fit(p, no_exog ? 0 : q, data, fo);
  json j = r;
  j["standard_errors"] = standard_errors(r.model, data, r.start);
  j["input"] = c.input;
  write_json(out_dir(c) / "fit.json", j);
  std::cout << j.dump(2) << "\n";
  return 0;
}

int cmd_sweep(const Common& c, const std::vector<int>& p_range, const std::vector<int>& q_range, bool no_exog) {
  if (c.input.empty()) throw config_error("--input is required for this command");
  const SeriesPair data = load_series(c.input);
  SweepOptions so;
  so.include_no_exog = no_exog;
  so.threads = c.threads;
  const SweepResult r = model_selection_sweep(data, p_range, q_range, so);
  const fs::path dir = out_dir(c);
  write_text_file((dir / "sweep.csv").string(), to_text([&](std::ostream& os) { write_sweep_csv(os, r); }));
  json j = sweep_to_json(r);
  j["input"] = c.input;
  j["p_range"] = p_range;
  j["q_range"] = q_range;
  write_json(dir / "sweep.json", j);
  return 0;
}

int cmd_gamma(const Common& c, std::size_t d, std::size_t t_star) {
  const std::vector<double> x = input_x(c);
  const QuantileGrid grid = make_quantile_grid(x, d);
  const CovKernel k = estimate_gamma(x, grid, t_star);
  if (k.psd_adjusted && k.clip_magnitude > kClipWarnLevel)
    std::cerr << "warning: Gamma estimate clipped to PSD (largest clipped eigenvalue " << k.clip_magnitude << ")\n";
  write_json(out_dir(c) / "gamma.json", json{{"input", c.input}, {"d", d}, {"t_star", t_star}, {"grid", grid}, {"kernel", k}});
  return 0;
}

int cmd_threshold(const Common& c) {
  ExperimentConfig cfg = load_config(c);
  cfg.seed = need_seed(c);
  const MonitoringConfig& mon = cfg.need_monitoring();
  const Reference ref = build_reference(cfg);
  const fs::path dir = out_dir(c);
  write_text_file((dir / "thresholds.csv").string(),
                  to_text([&](std::ostream& os) { write_threshold_csv(os, ref.table); }));
  write_json(dir / "thresholds.json", json{{"config", config_to_json(cfg)},
                                           {"horizon", make_threshold_request(mon, ref.kernel, ref.a_matrix, 0, 1).horizon()},
                                           {"grid", ref.grid},
                                           {"kernel", ref.kernel},
                                           {"thresholds", ref.table}});
  return 0;
}

int cmd_calibrate(const Common& c, std::optional<double> gamma, std::optional<double> alpha, const std::string& aux) {
  ExperimentConfig cfg = load_config(c);
  cfg.seed = need_seed(c);
  const MonitoringConfig& mon = cfg.need_monitoring();
  const std::vector<double> x = input_x(c);
  const std::size_t m = mon.m.front();
  if (x.size() < m) throw config_error("calibrate: input holds fewer than m observations");
  CalibrationConfig cc;
  cc.n_ratio = mon.n_ratio;
  cc.gamma = gamma.value_or(mon.gammas.front());
  cc.alpha = alpha.value_or(mon.alphas.front());
  cc.delta = mon.delta;
  cc.d = mon.d;
  cc.t_star = mon.t_star;
  cc.weight = mon.weight;
  cc.m_sim = mon.m_sim;
  cc.reps = mon.threshold_reps;
  cc.seed = cfg.seed;
  cc.threads = cfg.threads;
  std::vector<double> aux_x;
  if (!aux.empty()) {
    aux_x = load_series(aux).x;
    cc.grid_source = cc.kernel_source = SampleSource::auxiliary;
  }
  const MonitorPlan plan = calibrate(std::span<const double>(x).first(m), cc, aux_x);
  const fs::path dir = out_dir(c);
  write_json(dir / "plan.json", plan);
  write_json(dir / "calibrate.json", json{{"config", config_to_json(cfg)}, {"input", c.input}, {"auxiliary", aux}});
  return 0;
}

int cmd_monitor(const Common& c, const std::string& plan_path, std::optional<std::size_t> true_change) {
  const MonitorPlan plan = read_json_file(plan_path).get<MonitorPlan>();
  std::vector<double> stream;
  if (c.input.empty() || c.input == "-") {
    stream = read_stream_values(std::cin);
  } else {
    std::ifstream in(c.input);
    if (!in) throw config_error("cannot open " + c.input);
    stream = read_stream_values(in);
  }
  const DetectionReport r = run_to_completion(plan, stream, true_change);
  const fs::path dir = out_dir(c);
  const json j = r;
  write_json(dir / "report.json", j);
  write_text_file((dir / "trajectory.csv").string(), to_text([&](std::ostream& os) { write_trajectory_csv(os, r); }));
  std::cout << j.dump(2) << "\n";
  return 0;
}

int cmd_experiment(const Common& c, const std::string& kind) {
  ExperimentConfig cfg = load_config(c);
  cfg.seed = need_seed(c);
  if (!kind.empty() && parse_kind(kind) != cfg.kind)
    throw config_error("--kind " + kind + " does not match the config kind " + to_string(cfg.kind));
  const fs::path dir = out_dir(c);
  const json resolved = config_to_json(cfg);
  switch (cfg.kind) {
    case ExperimentKind::null_size: {
      const NullSizeResult r = run_null_size(cfg);
      json j = to_json(r);
      j["config"] = resolved;
      write_json(dir / "null_size.json", j);
      write_text_file((dir / "null_size.csv").string(), to_text([&](std::ostream& os) { write_size_csv(os, r); }));
      break;
    }
    case ExperimentKind::power: {
      const PowerResult r = run_power(cfg);
      json j = to_json(r);
      j["config"] = resolved;
      write_json(dir / "power.json", j);
      write_text_file((dir / "power.csv").string(), to_text([&](std::ostream& os) { write_power_csv(os, r); }));
      break;
    }
    case ExperimentKind::threshold_table: {
      const Reference ref = build_reference(cfg);
      write_json(dir / "threshold_table.json",
                 json{{"config", resolved}, {"grid", ref.grid}, {"kernel", ref.kernel}, {"thresholds", ref.table}});
      write_text_file((dir / "threshold_table.csv").string(),
                      to_text([&](std::ostream& os) { write_threshold_csv(os, ref.table); }));
      break;
    }
    case ExperimentKind::fit_sweep: {
      const FitSweepExperiment r = run_fit_sweep(cfg);
      json j = sweep_to_json(r.sweep);
      j["config"] = resolved;
      write_json(dir / "fit_sweep.json", j);
      write_text_file((dir / "fit_sweep.csv").string(), to_text([&](std::ostream& os) { write_sweep_csv(os, r.sweep); }));
      break;
    }
    case ExperimentKind::monitor_run: {
      if (!cfg.pipeline) throw config_error("monitor_run requires a 'pipeline' section");
      std::string input = !c.input.empty() ? c.input : cfg.pipeline->input;
      if (input.empty()) throw config_error("monitor_run: no input CSV (pipeline.input or --input)");
      if (c.input.empty() && fs::path(input).is_relative())
        input = (fs::path(c.config).parent_path() / input).string();
      cfg.pipeline->input = input;
      const PipelineReport r = run_real_pipeline(parse_monthly(read_csv_file(input)), cfg);
      json j = to_json(r);
      j["config"] = config_to_json(cfg);
      write_json(dir / "pipeline.json", j);
      write_text_file((dir / "fitted.csv").string(), to_text([&](std::ostream& os) { write_fitted_csv(os, r); }));
      break;
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sequential change detection for bounded time series"};
  app.require_subcommand(1);
  Common c;

  auto add_common = [&](CLI::App* sub, bool stochastic, bool config) {
    sub->add_option("--out", c.out, "Output directory (default $BETAMON_OUT or ./out)");
    sub->add_option("--threads", c.threads, "Worker threads (0 = hardware concurrency)");
    if (stochastic) sub->add_option("--seed", c.seed, "Master seed (required)");
    if (config) {
      sub->add_option("--config", c.config, "Experiment config (JSON)");
      sub->add_flag("--fast", c.fast, "Reduced replication counts");
    }
  };

  std::size_t sim_n = 0;
  auto* simulate = app.add_subcommand("simulate", "Simulate (x, w) from the config's dgp section");
  add_common(simulate, true, true);
  simulate->add_option("--n", sim_n, "Series length")->required();

  int fit_p = 1, fit_q = 0;
  bool fit_no_exog = false;
  auto* fitc = app.add_subcommand("fit", "Conditional MLE of one (p, q) model");
  add_common(fitc, false, false);
  fitc->add_option("--input", c.input, "Series CSV (x,w or date,value[,exog])")->required();
  fitc->add_option("--p", fit_p, "Autoregressive order")->required();
  fitc->add_option("--q", fit_q, "Exogenous lag order");
  fitc->add_flag("--no-exog", fit_no_exog, "Drop the exogenous input");

  std::vector<int> p_range, q_range;
  bool sweep_no_exog = false;
  auto* sweep = app.add_subcommand("sweep", "AIC/MAE sweep over (p, q)");
  add_common(sweep, false, false);
  sweep->add_option("--input", c.input, "Series CSV")->required();
  sweep->add_option("--p-range", p_range, "p values")->required()->delimiter(',');
  sweep->add_option("--q-range", q_range, "q values")->required()->delimiter(',');
  sweep->add_flag("--include-no-exog", sweep_no_exog, "Add the no-exogenous column");

  std::size_t gamma_d = 10, gamma_t = 50;
  auto* gamma = app.add_subcommand("gamma", "Quantile grid and long-run covariance of a sample");
  add_common(gamma, false, false);
  gamma->add_option("--input", c.input, "Series CSV")->required();
  gamma->add_option("--d", gamma_d, "Grid size")->required();
  gamma->add_option("--t-star", gamma_t, "Lag truncation");

  auto* threshold = app.add_subcommand("threshold", "Threshold table c(gamma, alpha) for a config");
  add_common(threshold, true, true);

  std::optional<double> cal_gamma, cal_alpha;
  std::string cal_aux;
  auto* cal = app.add_subcommand("calibrate", "Build a monitor plan from the first m observations");
  add_common(cal, true, true);
  cal->add_option("--input", c.input, "Training CSV")->required();
  cal->add_option("--gamma", cal_gamma, "Weight exponent (default: first in config)");
  cal->add_option("--alpha", cal_alpha, "Level (default: first in config)");
  cal->add_option("--auxiliary", cal_aux, "Long reference sample for grid and Gamma");

  std::string plan_path;
  std::optional<std::size_t> true_change;
  auto* mon = app.add_subcommand("monitor", "Run a plan over a stream of 'index,value' records");
  add_common(mon, false, false);
  mon->add_option("--plan", plan_path, "Plan file from calibrate")->required();
  mon->add_option("--input", c.input, "Stream file ('-' or absent: stdin)");
  mon->add_option("--true-change", true_change, "Last pre-change index, for delay reporting");

  std::string kind;
  auto* exp = app.add_subcommand("experiment", "Run a configured experiment");
  add_common(exp, true, true);
  exp->add_option("--kind", kind, "Expected experiment kind");
  exp->add_option("--input", c.input, "Input CSV for monitor_run");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (*simulate) return cmd_simulate(c, sim_n);
    if (*fitc) return cmd_fit(c, fit_p, fit_q, fit_no_exog);
    if (*sweep) return cmd_sweep(c, p_range, q_range, sweep_no_exog);
    if (*gamma) return cmd_gamma(c, gamma_d, gamma_t);
    if (*threshold) return cmd_threshold(c);
    if (*cal) return cmd_calibrate(c, cal_gamma, cal_alpha, cal_aux);
    if (*mon) return cmd_monitor(c, plan_path, true_change);
    if (*exp) return cmd_experiment(c, kind);
  } catch (const config_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const numerical_error& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 3;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 3;
  }
  return 2;
}
