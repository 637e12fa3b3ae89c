#include <algorithm>
#include <cmath>
#include <sstream>
#include <vector>

#include <gtest/gtest.h>

#include "betamon/statistic.hpp"
#include "betamon/threshold.hpp"

using namespace betamon;

namespace {

CovKernel iid_kernel(const std::vector<double>& x) {
  CovKernel k;
  const auto d = static_cast<Eigen::Index>(x.size());
  k.gamma.resize(d, d);
  for (Eigen::Index i = 0; i < d; ++i)
    for (Eigen::Index j = 0; j < d; ++j) k.gamma(i, j) = std::min(x[i], x[j]) - x[i] * x[j];
  k.t_star = 1;
  return k;
}

ThresholdRequest small_request() {
  ThresholdRequest r;
  r.kernel = iid_kernel({0.2, 0.5, 0.8});
  r.n_ratio = 1.0;
  r.gammas = {0.0, 0.25, 0.4};
  r.alphas = {0.1, 0.05, 0.025, 0.01};
  r.a_matrix = identity_weight(3);
  r.m_sim = 200;
  r.reps = 2000;
  r.seed = 123;
  r.threads = 1;
  return r;
}

}  // namespace

TEST(Threshold, HorizonFloorsTheEndpoint) {
  ThresholdRequest r = small_request();
  r.m_sim = 108;
  r.n_ratio = 24.0 / 108.0;
  EXPECT_EQ(r.horizon(), 132u);
  r.m_sim = 1000;
  r.n_ratio = 2.0;
  EXPECT_EQ(r.horizon(), 3000u);
  r.n_ratio = 1.5;
  EXPECT_EQ(r.horizon(), 2500u);
}

TEST(Threshold, QuantileIndex) {
  EXPECT_EQ(quantile_index(10000, 0.05), 9500u);
  EXPECT_EQ(quantile_index(10000, 0.01), 9900u);
  EXPECT_EQ(quantile_index(7, 0.5), 4u);
  EXPECT_EQ(quantile_index(10, 0.999), 1u);
  const std::vector<double> s{1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  EXPECT_EQ(upper_quantile(s, 0.1), 9.0);
}

TEST(Threshold, ZeroKernelGivesZeroSup) {
  ThresholdRequest r = small_request();
  r.kernel.gamma.setZero();
  r.reps = 50;
  for (const auto& row : simulate_sup_stats(r))
    for (double v : row) EXPECT_EQ(v, 0.0);
}

TEST(Threshold, DualImplementationOnSharedDraws) {
  ThresholdRequest r;
  r.kernel.gamma = Eigen::MatrixXd::Ones(1, 1);
  r.n_ratio = 1.0;
  r.gammas = {0.0};
  r.alphas = {0.05};
  r.a_matrix = Eigen::MatrixXd::Ones(1, 1);
  r.m_sim = 100;
  r.reps = 200;
  r.seed = 9;
  r.threads = 1;
  const auto sups = simulate_sup_stat(r, 0.0);
  for (std::size_t rep = 0; rep < r.reps; ++rep) {
    Rng rng = make_rng(r.seed, rep);
    std::normal_distribution<double> n(0.0, 1.0);
    std::vector<double> u(201, 0.0);
    for (int k = 1; k <= 200; ++k) u[k] = u[k - 1] + n(rng);
    double best = 0.0;
    for (int k = 101; k <= 200; ++k) {
      const double s = k / 100.0;
      const double dc = (u[k] - s * u[100]) / 10.0;
      const double rho = 1.0 / s;
      best = std::max(best, rho * rho * dc * dc);
    }
    EXPECT_NEAR(sups[rep], best, 1e-12 * (1.0 + best));
  }
}

TEST(Threshold, GaussianLimitCovariance) {
  const CovKernel k = iid_kernel({0.25, 0.5, 0.75});
  const Eigen::MatrixXd root = kernel_sqrt(k.gamma);
  const std::size_t m_sim = 200, reps = 10000;
  for (double s : {1.5, 2.0, 3.0}) {
    const auto ks = static_cast<std::size_t>(std::lround(s * m_sim));
    Eigen::MatrixXd draws(reps, 3);
    for (std::size_t r = 0; r < reps; ++r) {
      Rng rng = make_rng(55, r);
      walk_limit_process(rng, 3, m_sim, ks, [&](std::size_t kk, const Eigen::VectorXd& u, const Eigen::VectorXd& um) {
        if (kk == ks) draws.row(Eigen::Index(r)) = (root * (u - s * um)).transpose() / std::sqrt(double(m_sim));
      });
    }
    const Eigen::RowVectorXd mean = draws.colwise().mean();
    const Eigen::MatrixXd c = draws.rowwise() - mean;
    const Eigen::MatrixXd cov = c.transpose() * c / double(reps - 1);
    for (int i = 0; i < 3; ++i) EXPECT_NEAR(cov(i, i) / (s * (s - 1.0) * k.gamma(i, i)), 1.0, 0.05) << "s=" << s;
  }
}

TEST(Threshold, TableIsMonotone) {
  const ThresholdTable t = threshold_table(small_request());
  EXPECT_TRUE(t.monotone_in_alpha());
  EXPECT_TRUE(t.increasing_in_gamma());
  for (const auto& row : t.mc_se)
    for (double se : row) EXPECT_GT(se, 0.0);
}

TEST(Threshold, SeedAndThreadDeterminism) {
  ThresholdRequest r = small_request();
  r.reps = 300;
  const auto a = simulate_sup_stats(r);
  const auto b = simulate_sup_stats(r);
  r.threads = 4;
  const auto c = simulate_sup_stats(r);
  EXPECT_EQ(a, b);
  EXPECT_EQ(a, c);
  r.seed = 124;
  EXPECT_NE(a, simulate_sup_stats(r));
}

TEST(Threshold, SharedDrawsAcrossGammas) {
  ThresholdRequest r = small_request();
  r.reps = 100;
  const auto all = simulate_sup_stats(r);
  const auto one = simulate_sup_stat(r, 0.25);
  for (std::size_t i = 0; i < r.reps; ++i) EXPECT_EQ(all[i][1], one[i]);
}

TEST(Threshold, DoublingRepsStaysWithinMonteCarloError) {
  ThresholdRequest r = small_request();
  const ThresholdTable t1 = threshold_table(r);
  r.reps *= 2;
  r.seed = 999;
  const ThresholdTable t2 = threshold_table(r);
  for (std::size_t g = 0; g < t1.gammas.size(); ++g)
    for (std::size_t a = 0; a < t1.alphas.size(); ++a) {
      const double se = std::hypot(t1.mc_se[g][a], t2.mc_se[g][a]);
      EXPECT_LT(std::abs(t1.c[g][a] - t2.c[g][a]), 3.0 * se) << g << "," << a;
    }
}

TEST(Threshold, ShorterHorizonLowersThreshold) {
  ThresholdRequest r = small_request();
  r.n_ratio = 2.0;
  const ThresholdTable wide = threshold_table(r);
  r.n_ratio = 0.25;
  const ThresholdTable narrow = threshold_table(r);
  for (std::size_t a = 0; a < r.alphas.size(); ++a) EXPECT_LT(narrow.c[0][a], wide.c[0][a]);
}

TEST(Threshold, RejectsBadInput) {
  ThresholdRequest r = small_request();
  r.kernel.gamma(0, 0) = -1.0;
  EXPECT_THROW(simulate_sup_stats(r), numerical_error);
  r = small_request();
  r.a_matrix = identity_weight(2);
  EXPECT_THROW(simulate_sup_stats(r), config_error);
  r = small_request();
  r.n_ratio = 0.001;
  EXPECT_THROW(simulate_sup_stats(r), config_error);
  r = small_request();
  r.gammas = {0.6};
  EXPECT_THROW(simulate_sup_stats(r), config_error);
}

TEST(Threshold, CsvLayout) {
  ThresholdTable t;
  t.gammas = {0.0, 0.25};
  t.alphas = {0.1, 0.05};
  t.c = {{1.5, 2.0}, {2.5, 3.0}};
  std::ostringstream os;
  write_threshold_csv(os, t);
  EXPECT_EQ(os.str(), "gamma,0.1,0.05\n0,1.5,2\n0.25,2.5,3\n");
}
