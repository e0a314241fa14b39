#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "gwoens/nn/optimizers.hpp"
#include "oracles.hpp"

using namespace gwoens::nn;

namespace {

std::pair<double, double> run_two_steps(const OptimizerSpec& spec, double t0, double k) {
  std::vector<double> p{t0};
  OptimizerState state;
  std::vector<double> g{k * p[0]};
  optimizer_step(spec, p, g, state);
  const double t1 = p[0];
  g[0] = k * p[0];
  optimizer_step(spec, p, g, state);
  return {t1, p[0]};
}

}  // namespace

TEST(Optimizers, NamesAndIndexOrder) {
  EXPECT_EQ(kAllOptimizers.size(), 7u);
  EXPECT_EQ(optimizer_from_index(4), OptimizerKind::AdamW);
  EXPECT_EQ(parse_optimizer("Adamax"), OptimizerKind::Adamax);
  EXPECT_THROW(parse_optimizer("Lion"), std::invalid_argument);
  EXPECT_THROW(optimizer_from_index(7), std::invalid_argument);
}

TEST(Optimizers, SgdExamples) {
  OptimizerSpec spec{OptimizerKind::SGD, 0.1};
  std::vector<double> p{0.0}, g{1.0};
  OptimizerState s;
  optimizer_step(spec, p, g, s);
  EXPECT_DOUBLE_EQ(p[0], -0.1);
  g[0] = 0.0;
  optimizer_step(spec, p, g, s);
  EXPECT_DOUBLE_EQ(p[0], -0.1);
}

TEST(Optimizers, AdamFirstStepMagnitude) {
  for (double g0 : {3.0, -0.02, 1e-3}) {
    OptimizerSpec spec{OptimizerKind::Adam, 0.01};
    std::vector<double> p{1.0}, g{g0};
    OptimizerState s;
    optimizer_step(spec, p, g, s);
    EXPECT_NEAR(std::fabs(p[0] - 1.0), 0.01, 1e-6);
    EXPECT_NEAR(std::fabs(p[0] - 1.0), 0.01 * std::fabs(g0) / (std::fabs(g0) + 1e-8), 1e-15);
  }
}

class ClosedForm : public ::testing::TestWithParam<OptimizerKind> {};

TEST_P(ClosedForm, FirstTwoStepsOnScalarQuadratic) {
  for (double lr : {0.001, 0.03, 0.1}) {
    for (double t0 : {1.5, -0.7}) {
      for (double k : {0.5, 4.0}) {
        OptimizerSpec spec{GetParam(), lr};
        const auto [e1, e2] = oracle::two_steps(spec, t0, k);
        const auto [g1, g2] = run_two_steps(spec, t0, k);
        EXPECT_NEAR(g1, e1, 1e-10) << to_string(GetParam()) << " lr=" << lr;
        EXPECT_NEAR(g2, e2, 1e-10) << to_string(GetParam()) << " lr=" << lr;
      }
    }
  }
}

TEST_P(ClosedForm, ZeroGradientInvariant) {
  OptimizerSpec spec{GetParam(), 0.05};
  std::vector<double> p{0.3, -2.0, 7.5};
  const std::vector<double> before = p;
  std::vector<double> g(3, 0.0);
  OptimizerState s;
  optimizer_step(spec, p, g, s);
  optimizer_step(spec, p, g, s);
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (GetParam() == OptimizerKind::AdamW) {
      const double keep = 1.0 - 0.05 * spec.weight_decay;
      EXPECT_EQ(p[i], before[i] * keep * keep);
    } else {
      EXPECT_EQ(p[i], before[i]);
    }
  }
}

INSTANTIATE_TEST_SUITE_P(AllSeven, ClosedForm, ::testing::ValuesIn(kAllOptimizers),
                         [](const auto& info) { return std::string(to_string(info.param)); });

TEST(Optimizers, SizeMismatchThrows) {
  std::vector<double> p{1.0, 2.0}, g{1.0};
  OptimizerState s;
  EXPECT_THROW(optimizer_step(OptimizerSpec{}, p, g, s), std::invalid_argument);
  EXPECT_THROW(Optimizer(OptimizerSpec{OptimizerKind::Adam, 0.0}), std::invalid_argument);
}
