#pragma once

// Forecast accuracy metrics. Multi-step forecasts are passed flattened
// row-major, so every horizon step counts as one observation.

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>

namespace gwoens::metrics {

/// Raised by r2 when the targets have zero variance.
class UndefinedVarianceError : public std::domain_error {
 public:
  UndefinedVarianceError() : std::domain_error("r2: target variance is zero") {}
};

// Targets with |y| below this are skipped by the percentage metrics.
inline constexpr double kPercentageZeroThreshold = 1e-12;

enum class MspeVariant {
  // mean(((y - yhat) / y)^2)
  Percentage,
  // The squared-error form mean((y - yhat)^2), identical to mse.
  Printed,
};

namespace detail {

inline void check(std::span<const double> y, std::span<const double> yhat, const char* what) {
  if (y.size() != yhat.size())
    throw std::invalid_argument(std::string(what) + ": length mismatch (" + std::to_string(y.size()) + " vs " +
                                std::to_string(yhat.size()) + ")");
  if (y.empty()) throw std::invalid_argument(std::string(what) + ": empty input");
  for (std::size_t i = 0; i < y.size(); ++i)
    if (!std::isfinite(y[i]) || !std::isfinite(yhat[i]))
      throw std::invalid_argument(std::string(what) + ": non-finite entry at index " + std::to_string(i));
}

inline double sum_squared_error(std::span<const double> y, std::span<const double> yhat) {
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double e = y[i] - yhat[i];
    s += e * e;
  }
  return s;
}

}  // namespace detail

inline double mae(std::span<const double> y, std::span<const double> yhat) {
  detail::check(y, yhat, "mae");
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) s += std::abs(y[i] - yhat[i]);
  return s / static_cast<double>(y.size());
}

inline double mse(std::span<const double> y, std::span<const double> yhat) {
  detail::check(y, yhat, "mse");
  return detail::sum_squared_error(y, yhat) / static_cast<double>(y.size());
}

inline double rmse(std::span<const double> y, std::span<const double> yhat) {
  detail::check(y, yhat, "rmse");
  return std::sqrt(detail::sum_squared_error(y, yhat) / static_cast<double>(y.size()));
}

struct PercentageError {
  double value = 0.0;
  std::size_t excluded = 0;
};

inline PercentageError mape_detailed(std::span<const double> y, std::span<const double> yhat) {
  detail::check(y, yhat, "mape");
  double s = 0.0;
  std::size_t used = 0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (std::abs(y[i]) < kPercentageZeroThreshold) continue;
    s += std::abs(y[i] - yhat[i]) / std::abs(y[i]);
    ++used;
  }
  return {used ? s / static_cast<double>(used) : 0.0, y.size() - used};
}

inline double mape(std::span<const double> y, std::span<const double> yhat) { return mape_detailed(y, yhat).value; }

inline PercentageError mspe_detailed(std::span<const double> y, std::span<const double> yhat,
                                     MspeVariant variant = MspeVariant::Percentage) {
  detail::check(y, yhat, "mspe");
  if (variant == MspeVariant::Printed) return {detail::sum_squared_error(y, yhat) / static_cast<double>(y.size()), 0};
  double s = 0.0;
  std::size_t used = 0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (std::abs(y[i]) < kPercentageZeroThreshold) continue;
    const double e = (y[i] - yhat[i]) / y[i];
    s += e * e;
    ++used;
  }
  return {used ? s / static_cast<double>(used) : 0.0, y.size() - used};
}

inline double mspe(std::span<const double> y, std::span<const double> yhat,
                   MspeVariant variant = MspeVariant::Percentage) {
  return mspe_detailed(y, yhat, variant).value;
}

inline double r2(std::span<const double> y, std::span<const double> yhat) {
  detail::check(y, yhat, "r2");
  double mean = 0.0;
  for (double v : y) mean += v;
  mean /= static_cast<double>(y.size());
  double ss_tot = 0.0;
  for (double v : y) ss_tot += (v - mean) * (v - mean);
  if (ss_tot == 0.0) throw UndefinedVarianceError();
  return 1.0 - detail::sum_squared_error(y, yhat) / ss_tot;
}

struct MetricReport {
  double mae = 0.0;
  double mse = 0.0;
  double rmse = 0.0;
  double mspe = 0.0;
  double mape = 0.0;
  double r2 = 0.0;
  // Targets skipped by mape/mspe for being (near) zero.
  std::size_t percentage_excluded = 0;
};

inline MetricReport evaluate(std::span<const double> y, std::span<const double> yhat,
                             MspeVariant variant = MspeVariant::Percentage) {
  MetricReport r;
  r.mae = mae(y, yhat);
  r.mse = mse(y, yhat);
  r.rmse = rmse(y, yhat);
  const auto pe = mape_detailed(y, yhat);
  r.mape = pe.value;
  r.percentage_excluded = pe.excluded;
  r.mspe = mspe(y, yhat, variant);
  r.r2 = r2(y, yhat);
  return r;
}

inline const char* csv_header() { return "model,mae,mse,rmse,mspe,mape,r2,percentage_excluded"; }

}  // namespace gwoens::metrics
