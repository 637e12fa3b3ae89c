#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

#include <gtest/gtest.h>

#include "betamon/experiments.hpp"
#include "betamon/io.hpp"
#include "betamon/monitor.hpp"

namespace fs = std::filesystem;
using namespace betamon;

namespace {

const std::string kCli = BETAMON_CLI_PATH;

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    std::random_device rd;
    dir_ = fs::temp_directory_path() / ("betamon_cli_" + std::to_string(rd()));
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  int run(const std::string& args, const std::string& env = "") const {
    const std::string cmd = env + " " + kCli + " " + args + " > " + (dir_ / "stdout.txt").string() + " 2> " +
                            (dir_ / "stderr.txt").string();
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  static std::string slurp(const std::string& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
  }

  std::string write_config(const ExperimentConfig& c, const std::string& name) const {
    write_text_file(path(name), config_to_json(c).dump(2));
    return path(name);
  }

  fs::path dir_;
};

ExperimentConfig small_config() {
  ExperimentConfig c;
  c.kind = ExperimentKind::power;
  c.seed = 1;
  c.threads = 1;
  DgpConfig dgp;
  dgp.model = null_study_model();
  dgp.exogenous = null_study_exogenous();
  c.dgp = dgp;
  MonitoringConfig mon;
  mon.m = {100};
  mon.n_ratio = 1.0;
  mon.d = 5;
  mon.gammas = {0.0, 0.25};
  mon.alphas = {0.1, 0.05};
  mon.t_star = 10;
  mon.reference_length = 2000;
  mon.m_sim = 200;
  mon.threshold_reps = 300;
  mon.reps = 40;
  c.monitoring = mon;
  return c;
}

}  // namespace

TEST_F(Cli, SimulateMatchesLibrary) {
  const std::string cfg = write_config(small_config(), "cfg.json");
  ASSERT_EQ(run("simulate --config " + cfg + " --seed 4 --n 50 --out " + path("sim")), 0);
  const SeriesPair lib = simulate_pair(null_study_model(), null_study_exogenous(), 50, 4);
  const SeriesPair cli = load_series(path("sim/series.csv"));
  EXPECT_EQ(cli.x, lib.x);
  EXPECT_EQ(cli.w, lib.w);
}

TEST_F(Cli, ThresholdIsByteIdenticalAcrossRuns) {
  const std::string cfg = write_config(small_config(), "cfg.json");
  ASSERT_EQ(run("threshold --config " + cfg + " --seed 9 --out " + path("a")), 0);
  ASSERT_EQ(run("threshold --config " + cfg + " --seed 9 --threads 2 --out " + path("b")), 0);
  EXPECT_EQ(slurp(path("a/thresholds.csv")), slurp(path("b/thresholds.csv")));
  EXPECT_FALSE(slurp(path("a/thresholds.csv")).empty());
  ASSERT_EQ(run("threshold --config " + cfg + " --seed 10 --out " + path("c")), 0);
  EXPECT_NE(slurp(path("a/thresholds.csv")), slurp(path("c/thresholds.csv")));
}

TEST_F(Cli, CalibrateAndMonitorMatchLibrary) {
  ExperimentConfig c = small_config();
  c.monitoring->t_star = 5;
  const std::string cfg = write_config(c, "cfg.json");
  const SeriesPair s = simulate_pair(null_study_model(), null_study_exogenous(), 300, 12);
  {
    std::ostringstream os;
    os << "x\n";
    for (double v : s.x) os << Num{v} << "\n";
    write_text_file(path("train.csv"), os.str());
    std::ostringstream st;
    st << "index,value\n";
    for (std::size_t i = 100; i < s.x.size(); ++i) st << i + 1 << "," << Num{s.x[i]} << "\n";
    write_text_file(path("stream.csv"), st.str());
  }
  ASSERT_EQ(run("calibrate --config " + cfg + " --seed 21 --input " + path("train.csv") + " --gamma 0.25 --alpha 0.1 --out " +
                path("cal")),
            0)
      << slurp(path("stderr.txt"));

  CalibrationConfig cc;
  cc.n_ratio = 1.0;
  cc.gamma = 0.25;
  cc.alpha = 0.1;
  cc.d = 5;
  cc.t_star = 5;
  cc.m_sim = 200;
  cc.reps = 300;
  cc.seed = 21;
  cc.threads = 1;
  const MonitorPlan plan = calibrate(std::span<const double>(s.x).first(100), cc);
  EXPECT_EQ(read_json_file(path("cal/plan.json")), json(plan));

  ASSERT_EQ(run("monitor --plan " + path("cal/plan.json") + " --input " + path("stream.csv") + " --out " + path("mon")), 0);
  const DetectionReport lib = run_to_completion(plan, std::span<const double>(s.x).subspan(100));
  EXPECT_EQ(read_json_file(path("mon/report.json")), json(lib));
  EXPECT_EQ(json::parse(slurp(path("stdout.txt"))), json(lib));

  ASSERT_EQ(run("monitor --plan " + path("cal/plan.json") + " --input - --out " + path("mon2") + " < " + path("stream.csv")),
            0);
  EXPECT_EQ(slurp(path("mon/trajectory.csv")), slurp(path("mon2/trajectory.csv")));
}

TEST_F(Cli, PowerExperimentMatchesLibrary) {
  ExperimentConfig c = small_config();
  c.dgp->post_model = c.dgp->model;
  c.dgp->post_model->phi0 = 1.5;
  c.monitoring->change_index = 150;
  c.monitoring->gammas = {0.0};
  c.monitoring->alphas = {0.05};
  const std::string cfg = write_config(c, "power.json");
  ASSERT_EQ(run("experiment --config " + cfg + " --seed 33 --fast --kind power --out " + path("p")), 0)
      << slurp(path("stderr.txt"));
  c.seed = 33;
  apply_fast_profile(c);
  const PowerResult lib = run_power(c);
  const json got = read_json_file(path("p/power.json"));
  EXPECT_EQ(got.at("rows"), to_json(lib).at("rows"));
  std::ostringstream csv;
  write_power_csv(csv, lib);
  EXPECT_EQ(slurp(path("p/power.csv")), csv.str());
}

TEST_F(Cli, ExitCodes) {
  const std::string cfg = write_config(small_config(), "cfg.json");
  EXPECT_EQ(run("threshold --bogus"), 2);
  EXPECT_EQ(run("threshold --config " + cfg + " --out " + path("x")), 2);
  EXPECT_NE(slurp(path("stderr.txt")).find("--seed"), std::string::npos);
  EXPECT_EQ(run("experiment --config " + cfg + " --seed 1 --kind null_size --out " + path("x")), 2);
  write_text_file(path("broken.json"), "{\"kind\": \"power\"");
  EXPECT_EQ(run("threshold --config " + path("broken.json") + " --seed 1 --out " + path("x")), 2);
  EXPECT_EQ(run("fit --input " + path("missing.csv") + " --p 1 --out " + path("x")), 2);
  EXPECT_EQ(run(""), 2);
}

TEST_F(Cli, OutputDirectoryFromEnvironment) {
  const std::string cfg = write_config(small_config(), "cfg.json");
  ASSERT_EQ(run("simulate --config " + cfg + " --seed 2 --n 20", "BETAMON_OUT=" + path("env")), 0);
  EXPECT_TRUE(fs::exists(path("env/series.csv")));
  ASSERT_EQ(run("simulate --config " + cfg + " --seed 2 --n 20 --out " + path("flag"), "BETAMON_OUT=" + path("env2")), 0);
  EXPECT_TRUE(fs::exists(path("flag/series.csv")));
  EXPECT_FALSE(fs::exists(path("env2")));
}
