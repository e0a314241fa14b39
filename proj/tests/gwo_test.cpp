#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "gwoens/gwo.hpp"
#include "gwoens/gwo_io.hpp"
#include "gwoens/rng.hpp"

using namespace gwoens;
using namespace gwoens::gwo;

namespace {

Leaders make_leaders(const Position& a, const Position& b, const Position& d) {
  Leaders l;
  l.offer(a, 1.0);
  l.offer(b, 2.0);
  l.offer(d, 3.0);
  return l;
}

SearchSpace box(std::size_t n, double lo, double hi) {
  std::vector<DimensionSpec> dims;
  for (std::size_t i = 0; i < n; ++i) dims.push_back(DimensionSpec::continuous("x" + std::to_string(i), lo, hi));
  return SearchSpace(dims);
}

double sphere(const DecodedSolution& s) {
  double f = 0.0;
  for (double v : s.values) f += v * v;
  return f;
}

}  // namespace

TEST(Rng, EngineIsStandardMt19937_64) {
  Rng rng(5489);
  std::uint64_t v = 0;
  for (int i = 0; i < 10000; ++i) v = rng.next();
  EXPECT_EQ(v, 9981545732273789042ULL);
}

TEST(Rng, UniformInUnitInterval) {
  Rng rng(1);
  for (int i = 0; i < 10000; ++i) {
    const double u = rng.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
  }
}

TEST(Rng, DerivedStreamsDiffer) {
  EXPECT_NE(derive_seed(1, 0), derive_seed(1, 1));
  EXPECT_NE(derive_seed(1, 0), derive_seed(2, 0));
  EXPECT_EQ(derive_seed(9, 3), derive_seed(9, 3));
}

TEST(CoefficientA, Schedule) {
  EXPECT_DOUBLE_EQ(coefficient_a(0, 30), 2.0);
  EXPECT_DOUBLE_EQ(coefficient_a(30, 30), 0.0);
  EXPECT_DOUBLE_EQ(coefficient_a(15, 30), 1.0);
  EXPECT_THROW(coefficient_a(0, 0), std::invalid_argument);
  EXPECT_THROW(coefficient_a(31, 30), std::invalid_argument);
}

TEST(CoefficientVectors, Examples) {
  auto c = coefficient_vectors(2.0, {0.5}, {0.5});
  EXPECT_DOUBLE_EQ(c.A[0], 0.0);
  EXPECT_DOUBLE_EQ(c.C[0], 1.0);
  c = coefficient_vectors(0.0, {0.9}, {1.0});
  EXPECT_DOUBLE_EQ(c.A[0], 0.0);
  EXPECT_DOUBLE_EQ(c.C[0], 2.0);
  c = coefficient_vectors(1.0, {1.0}, {0.0});
  EXPECT_DOUBLE_EQ(c.A[0], 1.0);
  EXPECT_DOUBLE_EQ(c.C[0], 0.0);
  EXPECT_THROW(coefficient_vectors(1.0, {0.1, 0.2}, {0.3}), std::invalid_argument);
}

TEST(EncircleStep, Examples) {
  EXPECT_EQ(encircle_step({3.0}, {5.0}, {0.0}, {1.0}), Position{5.0});
  EXPECT_EQ(encircle_step({0.0}, {0.0}, {1.7}, {0.3}), Position{0.0});
  EXPECT_EQ(encircle_step({1.0}, {2.0}, {1.0}, {1.0}), Position{1.0});
  EXPECT_THROW(encircle_step({1.0, 2.0}, {2.0}, {1.0}, {1.0}), std::invalid_argument);
}

TEST(PackUpdate, ZeroExplorationCollapsesOntoCommonLeader) {
  const Position p{1.5, -2.0, 0.25};
  const Leaders l = make_leaders(p, p, p);
  Rng rng(3);
  const Position out = pack_update({9.0, 9.0, 9.0}, l, 0.0, rng);
  for (std::size_t i = 0; i < p.size(); ++i) EXPECT_DOUBLE_EQ(out[i], p[i]);
}

TEST(PackUpdate, FixedPointWhenLeadersEqualWolf) {
  const Position x{0.3, 0.7};
  Rng rng(4);
  const Position out = pack_update(x, make_leaders(x, x, x), 0.0, rng);
  EXPECT_DOUBLE_EQ(out[0], x[0]);
  EXPECT_DOUBLE_EQ(out[1], x[1]);
}

TEST(PackUpdate, HandTraceWithPinnedDraws) {
  const Position x{1.0, -2.0};
  const Position alpha{0.5, 0.5}, beta{2.0, -1.0}, delta{-1.0, 3.0};
  const double a = 1.2;
  // Transcript: the same stream replayed, draws in the documented order
  // (per leader: r1[0], r1[1], r2[0], r2[1]).
  Rng transcript(77);
  double r[12];
  for (double& v : r) v = transcript.uniform();
  const Position* leaders[3] = {&alpha, &beta, &delta};
  double expected[2] = {0.0, 0.0};
  for (int l = 0; l < 3; ++l) {
    const double* d = r + 4 * l;
    for (int i = 0; i < 2; ++i) {
      const double A = 2.0 * a * d[i] - a;
      const double C = 2.0 * d[2 + i];
      const double D = std::fabs(C * (*leaders[l])[i] - x[i]);
      expected[i] += ((*leaders[l])[i] - A * D) / 3.0;
    }
  }
  Rng rng(77);
  const Position out = pack_update(x, make_leaders(alpha, beta, delta), a, rng);
  EXPECT_NEAR(out[0], expected[0], 1e-14);
  EXPECT_NEAR(out[1], expected[1], 1e-14);
}

TEST(PackUpdate, RequiresThreeLeaders) {
  Leaders l;
  l.offer({0.0}, 1.0);
  Rng rng(1);
  EXPECT_THROW(pack_update({0.0}, l, 1.0, rng), std::logic_error);
}

TEST(Leaders, OrderedAndTiesKeepEarlier) {
  Leaders l;
  l.offer({1.0}, 5.0);
  l.offer({2.0}, 3.0);
  l.offer({3.0}, 4.0);
  l.offer({4.0}, 3.0);  // tie with alpha
  l.offer({5.0}, 10.0);
  EXPECT_EQ(l.alpha().position, Position{2.0});
  EXPECT_EQ(l.beta().position, Position{4.0});
  EXPECT_EQ(l.delta().position, Position{3.0});
  EXPECT_LE(l.alpha().fitness, l.beta().fitness);
  EXPECT_LE(l.beta().fitness, l.delta().fitness);
}

TEST(DimensionSpec, ValidationErrors) {
  EXPECT_THROW(DimensionSpec::continuous("x", 0.0, 1.0, true), std::invalid_argument);
  EXPECT_THROW(DimensionSpec::continuous("x", 1.0, 1.0), std::invalid_argument);
  EXPECT_THROW(DimensionSpec::continuous("x", 0.0, INFINITY), std::invalid_argument);
  EXPECT_THROW(DimensionSpec::integer("n", 3, 3), std::invalid_argument);
  EXPECT_THROW(DimensionSpec::categorical("c", 1), std::invalid_argument);
  EXPECT_THROW(SearchSpace({}), std::invalid_argument);
}

TEST(Clamp, Examples) {
  const SearchSpace space({DimensionSpec::integer("window", 3, 30), DimensionSpec::categorical("features", 4),
                           DimensionSpec::continuous("lr", 0.0001, 0.1, true)});
  const Position p = clamp({35.0, -1.2, std::log10(0.05)}, space);
  const auto d = decode(p, space);
  EXPECT_EQ(d.integer(0), 30);
  EXPECT_EQ(d.option(1), 0u);
  EXPECT_NEAR(p[2], -1.30103, 1e-5);
  EXPECT_NEAR(d.real(2), 0.05, 1e-15);
  EXPECT_LT(p[0], 31.0);
  EXPECT_EQ(decode(clamp({1e9, 1e9, 1e9}, space), space).values, (std::vector<double>{30.0, 3.0, 0.1}));
  EXPECT_EQ(decode(clamp({-1e9, -1e9, -1e9}, space), space).values, (std::vector<double>{3.0, 0.0, 0.0001}));
}

TEST(Decode, Examples) {
  EXPECT_EQ(DimensionSpec::categorical("c", 4).decode(2.7), 2.0);
  EXPECT_NEAR(DimensionSpec::continuous("lr", 0.0001, 0.1, true).decode(-2.0), 0.01, 1e-17);
  EXPECT_EQ(DimensionSpec::integer("w", 3, 30).decode(17.93), 17.0);
}

TEST(Encode, RoundTripsThroughDecode) {
  const SearchSpace space({DimensionSpec::continuous("lr", 0.0001, 0.1, true), DimensionSpec::integer("h", 1, 8),
                           DimensionSpec::categorical("o", 7), DimensionSpec::continuous("d", 0.2, 0.5)});
  const DecodedSolution s{{0.0031, 2.0, 4.0, 0.3992}};
  const auto back = decode(encode(s, space), space);
  EXPECT_NEAR(back.values[0], 0.0031, 1e-15);
  EXPECT_EQ(back.values[1], 2.0);
  EXPECT_EQ(back.values[2], 4.0);
  EXPECT_DOUBLE_EQ(back.values[3], 0.3992);
}

TEST(Optimize, ConstantObjective) {
  const auto space = box(3, -1.0, 1.0);
  const auto r = optimize([](const DecodedSolution&) { return 7.0; }, space, {});
  EXPECT_EQ(r.fitness, 7.0);
  EXPECT_TRUE(within_bounds(r.solution, space));
}

TEST(Optimize, SphereConverges) {
  GwoConfig cfg;
  cfg.pop_size = 20;
  cfg.iterations = 200;
  cfg.seed = 11;
  const auto r = optimize(sphere, box(10, -5.0, 5.0), cfg);
  EXPECT_LT(r.fitness, 1e-3);
}

TEST(Optimize, EvaluationCountAndTraceShape) {
  GwoConfig cfg;
  cfg.pop_size = 7;
  cfg.iterations = 13;
  std::size_t calls = 0;
  const auto r = optimize(
      [&](const DecodedSolution& s) {
        ++calls;
        return sphere(s);
      },
      box(2, -1.0, 1.0), cfg);
  EXPECT_EQ(calls, 7u * 14u);
  EXPECT_EQ(r.trace.evaluations, 7u * 14u);
  EXPECT_EQ(r.trace.best_fitness_per_iteration.size(), 13u);
  for (std::size_t t = 1; t < 13; ++t)
    EXPECT_LE(r.trace.best_fitness_per_iteration[t], r.trace.best_fitness_per_iteration[t - 1]);
  EXPECT_EQ(r.trace.best_fitness_per_iteration.back(), r.fitness);
}

TEST(Optimize, DeterministicUnderSeedAndThreads) {
  GwoConfig cfg;
  cfg.pop_size = 9;
  cfg.iterations = 25;
  cfg.seed = 1234;
  const auto space = box(4, -3.0, 3.0);
  const auto a = optimize(sphere, space, cfg);
  const auto b = optimize(sphere, space, cfg);
  cfg.threads = 3;
  const auto c = optimize(sphere, space, cfg);
  EXPECT_EQ(a.position, b.position);
  EXPECT_EQ(a.trace.best_fitness_per_iteration, b.trace.best_fitness_per_iteration);
  EXPECT_EQ(a.position, c.position);
  EXPECT_EQ(a.trace.best_fitness_per_iteration, c.trace.best_fitness_per_iteration);
  cfg.seed = 1235;
  cfg.threads = 1;
  EXPECT_NE(optimize(sphere, space, cfg).position, a.position);
}

TEST(Optimize, SeededCandidateBoundsResult) {
  GwoConfig cfg;
  cfg.pop_size = 5;
  cfg.iterations = 2;
  cfg.seed = 3;
  cfg.seeded_candidates = {{0.0, 0.0}};
  const auto r = optimize(sphere, box(2, -5.0, 5.0), cfg);
  EXPECT_EQ(r.fitness, 0.0);
}

TEST(Optimize, EvaluatedPointsStayInBounds) {
  const SearchSpace space({DimensionSpec::continuous("lr", 0.0001, 0.1, true), DimensionSpec::integer("w", 3, 30),
                           DimensionSpec::categorical("f", 4), DimensionSpec::continuous("d", 0.2, 0.5)});
  GwoConfig cfg;
  cfg.pop_size = 8;
  cfg.iterations = 30;
  cfg.seed = 5;
  bool ok = true;
  optimize(
      [&](const DecodedSolution& s) {
        ok = ok && within_bounds(s, space);
        return -s.real(0) - s.real(3) - static_cast<double>(s.integer(1));
      },
      space, cfg);
  EXPECT_TRUE(ok);
}

TEST(Optimize, FailuresCountAsInfinityAndRunContinues) {
  GwoConfig cfg;
  cfg.pop_size = 6;
  cfg.iterations = 5;
  cfg.seed = 8;
  const auto r = optimize(
      [](const DecodedSolution& s) -> double {
        if (s.values[0] > 0.5) throw std::runtime_error("boom");
        if (s.values[0] < -0.5) return std::nan("");
        return s.values[0] * s.values[0];
      },
      box(1, -1.0, 1.0), cfg);
  EXPECT_TRUE(std::isfinite(r.fitness));
  EXPECT_GT(r.trace.failed_evaluations, 0u);
  EXPECT_EQ(r.trace.evaluations, 36u);
}

TEST(Optimize, ConfigErrors) {
  GwoConfig cfg;
  cfg.pop_size = 3;
  EXPECT_THROW(optimize(sphere, box(1, 0.0, 1.0), cfg), std::invalid_argument);
  cfg.pop_size = 4;
  cfg.iterations = 0;
  EXPECT_THROW(optimize(sphere, box(1, 0.0, 1.0), cfg), std::invalid_argument);
  cfg.iterations = 1;
  cfg.seeded_candidates.assign(5, Position{0.5});
  EXPECT_THROW(optimize(sphere, box(1, 0.0, 1.0), cfg), std::invalid_argument);
  cfg.seeded_candidates = {Position{0.5, 0.5}};
  EXPECT_THROW(optimize(sphere, box(1, 0.0, 1.0), cfg), std::invalid_argument);
}

TEST(TraceExport, CsvAndMetadata) {
  GwoConfig cfg;
  cfg.pop_size = 4;
  cfg.iterations = 3;
  cfg.seed = 21;
  const auto r = optimize(sphere, box(2, -1.0, 1.0), cfg);
  std::ostringstream csv;
  write_trace_csv(csv, r.trace);
  std::istringstream in(csv.str());
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "iteration,best_fitness");
  int rows = 0;
  while (std::getline(in, line)) ++rows;
  EXPECT_EQ(rows, 3);
  const auto meta = trace_metadata(r.trace, cfg);
  EXPECT_EQ(meta.at("seed").get<std::uint64_t>(), 21u);
  EXPECT_EQ(meta.at("evaluations").get<std::size_t>(), 16u);
  EXPECT_TRUE(meta.contains("wall_time_seconds"));
}
