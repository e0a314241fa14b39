#pragma once

#include <cstdio>
#include <ostream>
#include <string>

#include <nlohmann/json.hpp>

#include "gwoens/gwo.hpp"

namespace gwoens::gwo {

/// `iteration,best_fitness`, one row per iteration.
inline void write_trace_csv(std::ostream& out, const Trace& trace) {
  out << "iteration,best_fitness\n";
  char buf[32];
  for (std::size_t t = 0; t < trace.best_fitness_per_iteration.size(); ++t) {
    std::snprintf(buf, sizeof buf, "%.17g", trace.best_fitness_per_iteration[t]);
    out << t << ',' << buf << '\n';
  }
}

inline nlohmann::json trace_metadata(const Trace& trace, const GwoConfig& config) {
  return {{"seed", config.seed},
          {"pop_size", config.pop_size},
          {"iterations", config.iterations},
          {"wall_time_seconds", trace.wall_time_seconds},
          {"evaluations", trace.evaluations},
          {"failed_evaluations", trace.failed_evaluations}};
}

}  // namespace gwoens::gwo
