#include <gtest/gtest.h>

#include <sstream>

#include "gwoens/data.hpp"
#include "gwoens/rng.hpp"
#include "gwoens/synth.hpp"
#include "oracles.hpp"

using namespace gwoens;
using namespace gwoens::data;

namespace {

RawSeries series(const std::string& name, std::vector<std::string> dates, std::vector<double> values) {
  RawSeries s;
  s.name = name;
  for (const auto& d : dates) s.dates.push_back(parse_date(d));
  s.values = std::move(values);
  return s;
}

std::string error_of(const std::string& csv) {
  std::istringstream in(csv);
  try {
    parse_csv(in, "x.csv");
  } catch (const DataError& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST(ParseDate, RoundTripAndErrors) {
  EXPECT_EQ(format_date(parse_date("2012-01-03")), "2012-01-03");
  EXPECT_THROW(parse_date("2012-02-30"), std::invalid_argument);
  EXPECT_THROW(parse_date("2012/01/03"), std::invalid_argument);
  EXPECT_THROW(parse_date("12-01-03"), std::invalid_argument);
}

TEST(LoadCsv, WellFormedThreeRows) {
  std::istringstream in("date,value\n2020-01-03,3.5\n2020-01-01,1.5\n2020-01-02,2.5\n");
  const auto s = parse_csv(in, "b.csv");
  ASSERT_EQ(s.size(), 3u);
  EXPECT_EQ(format_date(s.dates[0]), "2020-01-01");
  EXPECT_EQ(s.values, (std::vector<double>{1.5, 2.5, 3.5}));
}

TEST(LoadCsv, HeaderColumnsByNameAndBom) {
  std::istringstream in("\xEF\xBB\xBFvalue,date\n7,2020-01-01\r\n8,2020-01-02\r\n");
  const auto s = parse_csv(in, "b.csv");
  EXPECT_EQ(s.values, (std::vector<double>{7.0, 8.0}));
}

TEST(LoadCsv, Errors) {
  EXPECT_NE(error_of("date,value\n2020-01-01,1\n2020-01-01,2\n").find("duplicate date 2020-01-01"), std::string::npos);
  EXPECT_NE(error_of("date,value\n2020-01-01,1\n2020-01-02,abc\n").find("line 3"), std::string::npos);
  EXPECT_NE(error_of("").find("empty"), std::string::npos);
  EXPECT_NE(error_of("date,value\n").find("no data rows"), std::string::npos);
  EXPECT_NE(error_of("day,value\n2020-01-01,1\n").find("missing column"), std::string::npos);
  EXPECT_NE(error_of("date,value\n2020-01-01,inf\n").find("line 2"), std::string::npos);
  EXPECT_THROW(load_csv("/nonexistent/file.csv"), DataError);
}

TEST(Align, IdenticalDates) {
  const auto b = series("B", {"2020-01-01", "2020-01-02", "2020-01-03"}, {1, 2, 3});
  const auto f = align(b, series("U", {"2020-01-01", "2020-01-02", "2020-01-03"}, {4, 5, 6}),
                       series("S", {"2020-01-01", "2020-01-02", "2020-01-03"}, {7, 8, 9}));
  EXPECT_EQ(f.size(), 3u);
  EXPECT_EQ(f.column(Column::Usdx), (std::vector<double>{4, 5, 6}));
}

TEST(Align, ForwardFillsMissingMidSeriesDate) {
  const auto b = series("B", {"2020-01-01", "2020-01-02", "2020-01-03"}, {1, 2, 3});
  const auto f = align(b, series("U", {"2020-01-01", "2020-01-03"}, {4, 6}),
                       series("S", {"2020-01-01", "2020-01-02", "2020-01-03"}, {7, 8, 9}));
  EXPECT_EQ(f.column(Column::Usdx), (std::vector<double>{4, 4, 6}));
}

TEST(Align, LeadingGapDropsBrentDates) {
  const auto b = series("B", {"2020-01-01", "2020-01-02", "2020-01-03", "2020-01-04", "2020-01-05"}, {1, 2, 3, 4, 5});
  const auto u = series("U", {"2020-01-01", "2020-01-02", "2020-01-03", "2020-01-04", "2020-01-05"}, {1, 1, 1, 1, 1});
  const auto f = align(b, u, series("S", {"2020-01-04", "2020-01-05"}, {7, 8}));
  ASSERT_EQ(f.size(), 2u);
  EXPECT_EQ(format_date(f.dates[0]), "2020-01-04");
  EXPECT_EQ(f.column(Column::Brent), (std::vector<double>{4, 5}));
}

TEST(Align, ExtraDatesIgnoredAndEmptyErrors) {
  const auto b = series("B", {"2020-01-02", "2020-01-04"}, {1, 2});
  const auto f = align(b, series("U", {"2020-01-01", "2020-01-03", "2020-01-04"}, {1, 2, 3}),
                       series("S", {"2020-01-01"}, {5}));
  EXPECT_EQ(f.size(), 2u);
  EXPECT_EQ(f.column(Column::Usdx), (std::vector<double>{1, 3}));
  EXPECT_THROW(align(b, series("U", {"2021-01-01"}, {1}), series("S", {"2020-01-01"}, {5})), DataError);
}

TEST(Normalizer, Examples) {
  AlignedFrame f = oracle::row_tagged_frame(3);
  f.column(Column::Brent) = {10, 20, 30};
  const auto n = Normalizer::fit(f, 3);
  const auto g = n.apply(f);
  EXPECT_EQ(g.column(Column::Brent), (std::vector<double>{0.0, 0.5, 1.0}));
  EXPECT_DOUBLE_EQ(n.apply(Column::Brent, 35.0), 1.25);
  Rng rng(3);
  for (int i = 0; i < 1000; ++i) {
    const double v = rng.uniform(-100.0, 100.0);
    EXPECT_NEAR(n.invert(Column::Brent, n.apply(Column::Brent, v)), v, 1e-9);
  }
  const auto back = n.invert(g);
  EXPECT_EQ(back.column(Column::Brent), f.column(Column::Brent));
}

TEST(Normalizer, FitsOnLeadingRowsOnlyAndRejectsConstant) {
  AlignedFrame f = oracle::row_tagged_frame(10);
  const auto n = Normalizer::fit(f, 4);
  EXPECT_EQ(n.max(Column::Brent), 3.0);
  EXPECT_GT(n.apply(Column::Brent, 9.0), 1.0);
  f.column(Column::Sent).assign(10, 1.0);
  EXPECT_THROW(Normalizer::fit(f, 4), DataError);
  EXPECT_THROW(Normalizer::fit(f, 1), DataError);
}

TEST(FeatureSet, DecodesFromIndex) {
  EXPECT_EQ(feature_set_from_index(0), FeatureSet::None);
  EXPECT_EQ(feature_set_from_index(3), FeatureSet::Both);
  EXPECT_EQ(feature_count(FeatureSet::Both), 3u);
  EXPECT_EQ(feature_count(FeatureSet::Sent), 2u);
  EXPECT_EQ(parse_feature_set("USDX"), FeatureSet::Usdx);
  EXPECT_THROW(feature_set_from_index(4), std::invalid_argument);
}

TEST(MakeWindows, Examples) {
  EXPECT_EQ(make_windows(oracle::row_tagged_frame(10), FeatureSet::None, 3).size(), 5u);
  EXPECT_EQ(make_windows(oracle::row_tagged_frame(8), FeatureSet::None, 5).size(), 1u);
  const auto ds = make_windows(oracle::row_tagged_frame(12), FeatureSet::Both, 4);
  EXPECT_EQ(ds.X.shape(), (nn::Shape{6, 4, 3}));
  EXPECT_EQ(ds.Y.shape(), (nn::Shape{6, 3}));
  try {
    make_windows(oracle::row_tagged_frame(7), FeatureSet::None, 5);
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("at least 8"), std::string::npos);
  }
}

TEST(MakeWindows, ExhaustiveOracle) {
  for (std::size_t L = 1; L <= 40; ++L)
    for (std::size_t w = 3; w <= 30; ++w) ASSERT_EQ(oracle::check_windowing(L, w, 3), "") << "L=" << L << " w=" << w;
}

TEST(ChronologicalSplit, Examples) {
  const auto ds = make_windows(oracle::row_tagged_frame(107), FeatureSet::None, 5);
  ASSERT_EQ(ds.size(), 100u);
  const auto s = chronological_split(ds, 0.2);
  EXPECT_EQ(s.test.size(), 20u);
  EXPECT_EQ(s.train.size(), 78u);  // 80 before trimming horizon - 1 boundary samples
  EXPECT_THROW(chronological_split(make_windows(oracle::row_tagged_frame(17), FeatureSet::None, 5), 0.5),
               std::invalid_argument);
  EXPECT_LT(s.train.target_rows.back() + 2, s.test.target_rows.front());
}

TEST(SplitPlan, WindowsShareEvaluationTargets) {
  const auto frame = oracle::row_tagged_frame(300);
  const auto plan = plan_splits(300, 0.2, 0.1, 30);
  EXPECT_EQ(plan.normalizer_rows(), plan.test_first);
  std::vector<std::size_t> val_rows, test_rows;
  for (std::size_t w = 3; w <= 30; ++w) {
    const auto p = apply_plan(make_windows(frame, FeatureSet::Sent, w), plan);
    ASSERT_GT(p.train.size(), 0u);
    if (w == 3) {
      val_rows = p.validation.target_rows;
      test_rows = p.test.target_rows;
    }
    EXPECT_EQ(p.validation.target_rows, val_rows);
    EXPECT_EQ(p.test.target_rows, test_rows);
    // No target of one slice reaches into the next.
    EXPECT_LT(p.train.target_rows.back() + 2, p.validation.target_rows.front());
    EXPECT_LT(p.validation.target_rows.back() + 2, p.test.target_rows.front());
    // Inputs of the validation and test samples may read earlier targets,
    // but every X value precedes its own target row.
    for (std::size_t i = 0; i < p.test.size(); ++i)
      EXPECT_LT(p.test.X[(i * w + w - 1) * 2], static_cast<double>(p.test.target_rows[i]));
  }
  EXPECT_EQ(test_rows.back(), 297u);
  EXPECT_THROW(plan_splits(30, 0.2, 0.1, 30), DataError);
}

TEST(Synth, ShapeOfGeneratedSeries) {
  synth::SynthConfig cfg;
  cfg.rows = 120;
  const auto s = synth::generate(cfg);
  EXPECT_EQ(s.brent.size(), 120u);
  EXPECT_LT(s.usdx.size(), 120u);
  EXPECT_EQ(s.sent.size(), 117u);
  EXPECT_EQ(format_date(s.brent.dates.front()), "2012-01-03");
  const auto f = align(s.brent, s.usdx, s.sent);
  EXPECT_EQ(f.size(), 117u);
  const auto again = synth::generate(cfg);
  EXPECT_EQ(again.brent.values, s.brent.values);
}
