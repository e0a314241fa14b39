#pragma once

// Daily series ingestion, calendar alignment, min-max scaling and
// sliding-window supervised datasets.

#include <algorithm>
#include <array>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <istream>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "gwoens/nn/tensor.hpp"

namespace gwoens::data {

using Date = std::chrono::year_month_day;

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline std::string format_date(Date d) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(d.year()), static_cast<unsigned>(d.month()),
                static_cast<unsigned>(d.day()));
  return buf;
}

/// Parses YYYY-MM-DD; throws std::invalid_argument otherwise.
inline Date parse_date(std::string_view s) {
  auto bad = [&] { return std::invalid_argument("not an ISO-8601 date: '" + std::string(s) + "'"); };
  if (s.size() != 10 || s[4] != '-' || s[7] != '-') throw bad();
  int y = 0;
  unsigned m = 0, d = 0;
  auto parse = [&](std::string_view part, auto& out) {
    const auto [p, ec] = std::from_chars(part.data(), part.data() + part.size(), out);
    if (ec != std::errc() || p != part.data() + part.size()) throw bad();
  };
  parse(s.substr(0, 4), y);
  parse(s.substr(5, 2), m);
  parse(s.substr(8, 2), d);
  const Date date{std::chrono::year{y}, std::chrono::month{m}, std::chrono::day{d}};
  if (!date.ok()) throw bad();
  return date;
}

struct RawSeries {
  std::string name;
  std::vector<Date> dates;
  std::vector<double> values;

  std::size_t size() const { return dates.size(); }
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline std::vector<std::string_view> split(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const auto comma = line.find(',', start);
    out.push_back(trim(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

inline double parse_value(std::string_view s) {
  double v = 0.0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc() || p != s.data() + s.size() || !std::isfinite(v))
    throw std::invalid_argument("not a finite number: '" + std::string(s) + "'");
  return v;
}

}  // namespace detail

/// Reads a headered CSV; rows come back sorted by date. Duplicate dates,
/// unparseable rows and empty input raise DataError.
inline RawSeries parse_csv(std::istream& in, const std::string& name, std::string_view date_column = "date",
                           std::string_view value_column = "value") {
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line)) throw DataError(name + ": empty file");
  ++line_no;
  if (line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
  const auto header = detail::split(line);
  const auto find = [&](std::string_view col) {
    const auto it = std::find(header.begin(), header.end(), col);
    if (it == header.end()) throw DataError(name + ": missing column '" + std::string(col) + "'");
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t date_idx = find(date_column);
  const std::size_t value_idx = find(value_column);

  std::vector<std::pair<Date, double>> rows;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    const auto fields = detail::split(line);
    try {
      if (fields.size() <= std::max(date_idx, value_idx)) throw std::invalid_argument("too few fields");
      rows.emplace_back(parse_date(fields[date_idx]), detail::parse_value(fields[value_idx]));
    } catch (const std::invalid_argument& e) {
      throw DataError(name + ": line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (rows.empty()) throw DataError(name + ": no data rows");
  std::stable_sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return a.first < b.first; });

  RawSeries out;
  out.name = name;
  out.dates.reserve(rows.size());
  out.values.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (i > 0 && rows[i].first == rows[i - 1].first)
      throw DataError(name + ": duplicate date " + format_date(rows[i].first));
    out.dates.push_back(rows[i].first);
    out.values.push_back(rows[i].second);
  }
  return out;
}

inline RawSeries load_csv(const std::filesystem::path& path, std::string_view date_column = "date",
                          std::string_view value_column = "value") {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  return parse_csv(in, path.filename().string(), date_column, value_column);
}

enum class Column : std::size_t { Brent = 0, Usdx = 1, Sent = 2 };

inline constexpr std::array<const char*, 3> kColumnNames = {"BRENT", "USDX", "SENT"};

/// BRENT's calendar with USDX and SENT forward-filled onto it.
struct AlignedFrame {
  std::vector<Date> dates;
  std::array<std::vector<double>, 3> columns;

  std::size_t size() const { return dates.size(); }
  const std::vector<double>& column(Column c) const { return columns[static_cast<std::size_t>(c)]; }
  std::vector<double>& column(Column c) { return columns[static_cast<std::size_t>(c)]; }
};

/// Keeps exactly BRENT's dates. A missing USDX/SENT date takes the most
/// recent earlier value; BRENT dates before the first USDX or SENT
/// observation are dropped.
inline AlignedFrame align(const RawSeries& brent, const RawSeries& usdx, const RawSeries& sent) {
  if (brent.size() == 0 || usdx.size() == 0 || sent.size() == 0)
    throw DataError("align: all series must be non-empty");
  AlignedFrame frame;
  std::size_t iu = 0, is = 0;
  for (std::size_t i = 0; i < brent.size(); ++i) {
    const Date d = brent.dates[i];
    while (iu < usdx.size() && usdx.dates[iu] <= d) ++iu;
    while (is < sent.size() && sent.dates[is] <= d) ++is;
    if (iu == 0 || is == 0) continue;  // no prior value yet
    frame.dates.push_back(d);
    frame.column(Column::Brent).push_back(brent.values[i]);
    frame.column(Column::Usdx).push_back(usdx.values[iu - 1]);
    frame.column(Column::Sent).push_back(sent.values[is - 1]);
  }
  if (frame.size() == 0) throw DataError("align: no BRENT date has prior USDX and SENT values");
  return frame;
}

/// Per-column min-max scaling fitted on the leading training rows.
class Normalizer {
 public:
  Normalizer() = default;
  Normalizer(std::array<double, 3> mins, std::array<double, 3> maxs) : min_(mins), max_(maxs) {
    for (std::size_t c = 0; c < 3; ++c)
      if (!(max_[c] > min_[c])) throw DataError(std::string("normalizer: column ") + kColumnNames[c] + " is constant");
  }

  static Normalizer fit(const AlignedFrame& frame, std::size_t train_rows) {
    if (train_rows < 2 || train_rows > frame.size())
      throw DataError("normalizer: train_rows must be in [2, " + std::to_string(frame.size()) + "]");
    std::array<double, 3> mins{}, maxs{};
    for (std::size_t c = 0; c < 3; ++c) {
      const auto& col = frame.columns[c];
      const auto [lo, hi] = std::minmax_element(col.begin(), col.begin() + static_cast<std::ptrdiff_t>(train_rows));
      mins[c] = *lo;
      maxs[c] = *hi;
    }
    return Normalizer(mins, maxs);
  }

  double apply(Column c, double v) const {
    const auto i = static_cast<std::size_t>(c);
    return (v - min_[i]) / (max_[i] - min_[i]);
  }
  double invert(Column c, double v) const {
    const auto i = static_cast<std::size_t>(c);
    return v * (max_[i] - min_[i]) + min_[i];
  }

  AlignedFrame apply(const AlignedFrame& frame) const {
    AlignedFrame out = frame;
    for (std::size_t c = 0; c < 3; ++c)
      for (auto& v : out.columns[c]) v = apply(static_cast<Column>(c), v);
    return out;
  }
  AlignedFrame invert(const AlignedFrame& frame) const {
    AlignedFrame out = frame;
    for (std::size_t c = 0; c < 3; ++c)
      for (auto& v : out.columns[c]) v = invert(static_cast<Column>(c), v);
    return out;
  }

  double min(Column c) const { return min_[static_cast<std::size_t>(c)]; }
  double max(Column c) const { return max_[static_cast<std::size_t>(c)]; }

 private:
  std::array<double, 3> min_{0.0, 0.0, 0.0};
  std::array<double, 3> max_{1.0, 1.0, 1.0};
};

// Categorical index order of the feature search dimension.
enum class FeatureSet { None, Usdx, Sent, Both };

inline FeatureSet feature_set_from_index(std::size_t index) {
  if (index > 3) throw std::invalid_argument("feature set index out of range: " + std::to_string(index));
  return static_cast<FeatureSet>(index);
}

inline const char* to_string(FeatureSet f) {
  switch (f) {
    case FeatureSet::None: return "NONE";
    case FeatureSet::Usdx: return "USDX";
    case FeatureSet::Sent: return "SENT";
    case FeatureSet::Both: return "BOTH";
  }
  return "?";
}

inline FeatureSet parse_feature_set(std::string_view s) {
  for (std::size_t i = 0; i < 4; ++i)
    if (s == to_string(static_cast<FeatureSet>(i))) return static_cast<FeatureSet>(i);
  throw std::invalid_argument("unknown feature set '" + std::string(s) + "'");
}

/// Columns fed to the model: BRENT first, then the selected extras.
inline std::vector<Column> input_columns(FeatureSet f) {
  switch (f) {
    case FeatureSet::None: return {Column::Brent};
    case FeatureSet::Usdx: return {Column::Brent, Column::Usdx};
    case FeatureSet::Sent: return {Column::Brent, Column::Sent};
    case FeatureSet::Both: return {Column::Brent, Column::Usdx, Column::Sent};
  }
  throw std::invalid_argument("unknown feature set");
}

inline std::size_t feature_count(FeatureSet f) { return input_columns(f).size(); }

inline constexpr std::size_t kHorizon = 3;

/// X: (N, window, features), Y: (N, horizon). Sample i reads rows
/// [i, i + window) and targets BRENT rows [target_rows[i], target_rows[i] + horizon).
struct WindowedDataset {
  nn::Tensor X;
  nn::Tensor Y;
  std::size_t window = 0;
  std::size_t horizon = kHorizon;
  FeatureSet features = FeatureSet::None;
  std::vector<std::size_t> target_rows;

  std::size_t size() const { return target_rows.size(); }
};

inline WindowedDataset make_windows(const AlignedFrame& frame, FeatureSet features, std::size_t window,
                                    std::size_t horizon = kHorizon) {
  if (window < 1 || horizon < 1) throw std::invalid_argument("make_windows: window and horizon must be >= 1");
  const std::size_t L = frame.size();
  if (L < window + horizon)
    throw DataError("make_windows: frame has " + std::to_string(L) + " rows, need at least " +
                    std::to_string(window + horizon) + " for window " + std::to_string(window) + " and horizon " +
                    std::to_string(horizon));
  const auto cols = input_columns(features);
  const std::size_t F = cols.size();
  const std::size_t N = L - window - horizon + 1;
  WindowedDataset ds;
  ds.window = window;
  ds.horizon = horizon;
  ds.features = features;
  ds.X = nn::Tensor({N, window, F});
  ds.Y = nn::Tensor({N, horizon});
  ds.target_rows.resize(N);
  const auto& brent = frame.column(Column::Brent);
  for (std::size_t i = 0; i < N; ++i) {
    for (std::size_t t = 0; t < window; ++t)
      for (std::size_t f = 0; f < F; ++f) ds.X[(i * window + t) * F + f] = frame.column(cols[f])[i + t];
    for (std::size_t h = 0; h < horizon; ++h) ds.Y[i * horizon + h] = brent[i + window + h];
    ds.target_rows[i] = i + window;
  }
  return ds;
}

/// Samples [begin, end) in order.
inline WindowedDataset subset(const WindowedDataset& ds, std::size_t begin, std::size_t end) {
  if (begin > end || end > ds.size()) throw std::out_of_range("subset: range out of bounds");
  WindowedDataset out;
  out.window = ds.window;
  out.horizon = ds.horizon;
  out.features = ds.features;
  const std::size_t xrow = ds.window * (ds.X.rank() == 3 ? ds.X.dim(2) : 0);
  out.X = nn::Tensor({end - begin, ds.window, ds.X.rank() == 3 ? ds.X.dim(2) : 0},
                     std::vector<double>(ds.X.data() + begin * xrow, ds.X.data() + end * xrow));
  out.Y = nn::Tensor({end - begin, ds.horizon},
                     std::vector<double>(ds.Y.data() + begin * ds.horizon, ds.Y.data() + end * ds.horizon));
  out.target_rows.assign(ds.target_rows.begin() + static_cast<std::ptrdiff_t>(begin),
                         ds.target_rows.begin() + static_cast<std::ptrdiff_t>(end));
  return out;
}

/// Samples whose first target row lies in [first_row, last_row].
inline WindowedDataset select_target_rows(const WindowedDataset& ds, std::size_t first_row, std::size_t last_row) {
  const auto lo = std::lower_bound(ds.target_rows.begin(), ds.target_rows.end(), first_row);
  const auto hi = std::upper_bound(ds.target_rows.begin(), ds.target_rows.end(), last_row);
  const auto b = static_cast<std::size_t>(lo - ds.target_rows.begin());
  const auto e = static_cast<std::size_t>(std::max(lo, hi) - ds.target_rows.begin());
  return subset(ds, b, e);
}

struct Split {
  WindowedDataset train;
  WindowedDataset test;
};

/// First ceil(N (1 - test_fraction)) samples train, the rest test, no
/// shuffling. The last horizon - 1 train samples are dropped so no train
/// target row reaches the first test target row.
inline Split chronological_split(const WindowedDataset& ds, double test_fraction) {
  if (!(test_fraction > 0.0 && test_fraction < 0.5))
    throw std::invalid_argument("chronological_split: test_fraction must be in (0, 0.5)");
  const std::size_t N = ds.size();
  const auto n_train = static_cast<std::size_t>(std::ceil(static_cast<double>(N) * (1.0 - test_fraction)));
  if (n_train >= N) throw DataError("chronological_split: empty test partition");
  const std::size_t gap = ds.horizon - 1;
  if (n_train <= gap) throw DataError("chronological_split: empty train partition after boundary trimming");
  return {subset(ds, 0, n_train - gap), subset(ds, n_train, N)};
}

/// Row boundaries shared by every window size, so that models with
/// different windows forecast the same validation and test targets.
///
///   test targets start at rows [test_first, L - horizon]
///   validation targets start at rows [validation_first, test_first - horizon]
///   train targets start at rows [window, validation_first - horizon]
struct SplitPlan {
  std::size_t frame_rows = 0;
  std::size_t horizon = kHorizon;
  std::size_t validation_first = 0;
  std::size_t test_first = 0;

  std::size_t train_last() const { return validation_first - horizon; }
  std::size_t validation_last() const { return test_first - horizon; }
  std::size_t test_last() const { return frame_rows - horizon; }
  // Rows available to fit the normalizer: everything before the first test target.
  std::size_t normalizer_rows() const { return test_first; }
};

inline SplitPlan plan_splits(std::size_t frame_rows, double test_fraction, double validation_fraction,
                             std::size_t max_window = 30, std::size_t horizon = kHorizon) {
  if (!(test_fraction > 0.0 && test_fraction < 0.5))
    throw std::invalid_argument("plan_splits: test_fraction must be in (0, 0.5)");
  if (!(validation_fraction > 0.0 && validation_fraction < 0.5))
    throw std::invalid_argument("plan_splits: validation_fraction must be in (0, 0.5)");
  if (frame_rows < max_window + 4 * horizon + 4)
    throw DataError("plan_splits: frame has " + std::to_string(frame_rows) + " rows, too short for window " +
                    std::to_string(max_window));
  const std::size_t positions = frame_rows - horizon + 1;  // target start rows 0 .. L - H
  const auto n_test = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(positions))));
  SplitPlan plan;
  plan.frame_rows = frame_rows;
  plan.horizon = horizon;
  plan.test_first = positions - n_test;
  const std::size_t before = plan.test_first - horizon + 1;  // validation/train target positions
  const auto n_val = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::llround(validation_fraction * static_cast<double>(before))));
  plan.validation_first = before - n_val;
  if (plan.validation_first < max_window + horizon + 1)
    throw DataError("plan_splits: no training samples left for window " + std::to_string(max_window));
  return plan;
}

struct PlannedSplit {
  WindowedDataset train;
  WindowedDataset validation;
  WindowedDataset test;
};

inline PlannedSplit apply_plan(const WindowedDataset& ds, const SplitPlan& plan) {
  return {select_target_rows(ds, 0, plan.train_last()),
          select_target_rows(ds, plan.validation_first, plan.validation_last()),
          select_target_rows(ds, plan.test_first, plan.test_last())};
}

}  // namespace gwoens::data
