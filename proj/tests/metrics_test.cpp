#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "gwoens/metrics.hpp"
#include "oracles.hpp"

using namespace gwoens::metrics;
using V = std::vector<double>;

TEST(Metrics, IdentityGivesIdealValues) {
  const V y{1.5, -2.0, 3.25, 40.0};
  const auto r = evaluate(y, y);
  EXPECT_EQ(r.mae, 0.0);
  EXPECT_EQ(r.mse, 0.0);
  EXPECT_EQ(r.rmse, 0.0);
  EXPECT_EQ(r.mspe, 0.0);
  EXPECT_EQ(r.mape, 0.0);
  EXPECT_EQ(r.r2, 1.0);
}

TEST(Metrics, UnitOffsets) {
  const V y{0.0, 0.0}, p{1.0, 1.0};
  EXPECT_EQ(mae(y, p), 1.0);
  EXPECT_EQ(mse(y, p), 1.0);
  EXPECT_EQ(rmse(y, p), 1.0);
}

TEST(Metrics, WorkedExample) {
  const V y{1, 2, 3}, p{2, 2, 5};
  EXPECT_DOUBLE_EQ(mae(y, p), 1.0);
  EXPECT_DOUBLE_EQ(mse(y, p), 5.0 / 3.0);
  EXPECT_DOUBLE_EQ(rmse(y, p), std::sqrt(5.0 / 3.0));
  EXPECT_DOUBLE_EQ(r2(y, p), -1.5);
  // |1-2|/1 + 0 + |3-5|/3
  EXPECT_DOUBLE_EQ(mape(y, p), (1.0 + 2.0 / 3.0) / 3.0);
  EXPECT_DOUBLE_EQ(mspe(y, p), (1.0 + 4.0 / 9.0) / 3.0);
  EXPECT_DOUBLE_EQ(mspe(y, p, MspeVariant::Printed), mse(y, p));
}

TEST(Metrics, MeanPredictorHasZeroR2) {
  const V y{1, 4, 2, 9};
  const V p(4, 4.0);
  EXPECT_NEAR(r2(y, p), 0.0, 1e-15);
}

TEST(Metrics, Errors) {
  EXPECT_THROW(mse(V{1, 2}, V{1}), std::invalid_argument);
  EXPECT_THROW(mae(V{}, V{}), std::invalid_argument);
  EXPECT_THROW(rmse(V{NAN}, V{1}), std::invalid_argument);
  EXPECT_THROW(r2(V{2, 2, 2}, V{1, 2, 3}), UndefinedVarianceError);
}

TEST(Metrics, PercentageExclusion) {
  const V y{0.0, 2.0, 1e-13}, p{1.0, 1.0, 5.0};
  const auto d = mape_detailed(y, p);
  EXPECT_EQ(d.excluded, 2u);
  EXPECT_DOUBLE_EQ(d.value, 0.5);
  EXPECT_EQ(evaluate(V{0.0, 2.0, 1.0}, V{1.0, 1.0, 1.0}).percentage_excluded, 1u);
}

TEST(Metrics, AgreesWithBruteForceOracle) {
  std::mt19937_64 gen(2024);
  std::uniform_real_distribution<double> u(-50.0, 50.0);
  std::uniform_int_distribution<int> len(2, 60);
  for (int trial = 0; trial < 1000; ++trial) {
    V y(len(gen)), p(y.size());
    for (auto& v : y) v = u(gen);
    for (auto& v : p) v = u(gen);
    const auto want = oracle::brute_metrics(y, p);
    const auto got = evaluate(y, p);
    ASSERT_TRUE(oracle::close_rel(got.mae, want.mae, 1e-12)) << trial;
    ASSERT_TRUE(oracle::close_rel(got.mse, want.mse, 1e-12)) << trial;
    ASSERT_TRUE(oracle::close_rel(got.rmse, want.rmse, 1e-12)) << trial;
    ASSERT_TRUE(oracle::close_rel(got.mspe, want.mspe, 1e-12)) << trial;
    ASSERT_TRUE(oracle::close_rel(got.mape, want.mape, 1e-12)) << trial;
    ASSERT_TRUE(oracle::close_rel(got.r2, want.r2, 1e-12)) << trial;
  }
}

TEST(Metrics, Properties) {
  std::mt19937_64 gen(7);
  std::normal_distribution<double> n(0.0, 3.0);
  for (int trial = 0; trial < 200; ++trial) {
    V y(17), p(17);
    for (auto& v : y) v = n(gen);
    for (auto& v : p) v = n(gen);
    const double m = mse(y, p), r = rmse(y, p);
    EXPECT_NEAR(r * r, m, 1e-12 * m);
    EXPECT_LE(mae(y, p), r * (1 + 1e-15));
    EXPECT_LE(r2(y, p), 1.0);
    std::vector<std::size_t> idx(y.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::shuffle(idx.begin(), idx.end(), gen);
    V ys, ps;
    for (auto i : idx) {
      ys.push_back(y[i]);
      ps.push_back(p[i]);
    }
    EXPECT_NEAR(mse(ys, ps), m, 1e-12 * m);
    EXPECT_NEAR(r2(ys, ps), r2(y, p), 1e-12);
  }
}
