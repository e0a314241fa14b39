#pragma once

// Synthetic stand-ins for the Brent, USDX and SENT daily series.

#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <stdexcept>
#include <string>

#include "gwoens/data.hpp"
#include "gwoens/rng.hpp"

namespace gwoens::synth {

struct SynthConfig {
  std::size_t rows = 400;
  std::uint64_t seed = 7;
  data::Date start = data::Date{std::chrono::year{2012}, std::chrono::January, std::chrono::day{3}};
  double noise = 0.6;           // BRENT noise sd, in USD
  std::size_t usdx_gap_every = 17;  // every n-th BRENT date has no USDX quote
  std::size_t sent_lag_days = 3;    // SENT starts this many business days late
};

struct SynthSeries {
  data::RawSeries brent;
  data::RawSeries usdx;
  data::RawSeries sent;
};

inline double gaussian(Rng& rng) {
  // Box-Muller; u1 is kept away from zero.
  const double u1 = 1.0 - rng.uniform();
  const double u2 = rng.uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

/// Business days (Mon..Fri) starting at `start`.
inline std::vector<data::Date> business_days(data::Date start, std::size_t count) {
  std::vector<data::Date> out;
  out.reserve(count);
  std::chrono::sys_days d{start};
  while (out.size() < count) {
    const std::chrono::weekday wd{d};
    if (wd != std::chrono::Saturday && wd != std::chrono::Sunday) out.emplace_back(d);
    d += std::chrono::days{1};
  }
  return out;
}

/// Noisy two-tone cycle on a drifting level for BRENT; USDX moves against
/// BRENT and misses some dates; SENT leads BRENT's main cycle by a few days.
inline SynthSeries generate(const SynthConfig& cfg) {
  if (cfg.rows < 60) throw std::invalid_argument("synth: rows must be >= 60");
  Rng rng(cfg.seed);
  const auto dates = business_days(cfg.start, cfg.rows);
  const double two_pi = 2.0 * std::numbers::pi;
  SynthSeries s;
  s.brent.name = "BRENT";
  s.usdx.name = "USDX";
  s.sent.name = "SENT";
  double level = 65.0;
  for (std::size_t i = 0; i < cfg.rows; ++i) {
    const double t = static_cast<double>(i);
    level += 0.02 + 0.05 * gaussian(rng);
    const double cycle = 9.0 * std::sin(two_pi * t / 48.0) + 4.0 * std::sin(two_pi * t / 17.0 + 1.0);
    const double brent = level + cycle + cfg.noise * gaussian(rng);
    const double usdx = 95.0 - 0.25 * cycle + 0.3 * gaussian(rng);
    const double sent = std::sin(two_pi * (t + 4.0) / 48.0) + 0.15 * gaussian(rng);
    s.brent.dates.push_back(dates[i]);
    s.brent.values.push_back(brent);
    if (cfg.usdx_gap_every == 0 || i % cfg.usdx_gap_every != cfg.usdx_gap_every - 1) {
      s.usdx.dates.push_back(dates[i]);
      s.usdx.values.push_back(usdx);
    }
    if (i >= cfg.sent_lag_days) {
      s.sent.dates.push_back(dates[i]);
      s.sent.values.push_back(sent);
    }
  }
  return s;
}

inline void write_csv(const data::RawSeries& series, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "date,value\n";
  char buf[64];
  for (std::size_t i = 0; i < series.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.6f", series.values[i]);
    out << data::format_date(series.dates[i]) << ',' << buf << '\n';
  }
}

}  // namespace gwoens::synth
