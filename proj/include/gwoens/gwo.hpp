#pragma once

// Grey Wolf Optimizer over bounded mixed (continuous / integer / categorical)
// search spaces.
//
// Every dimension is carried as a real coordinate so the encircling update
// applies unchanged to all kinds; integer and categorical coordinates are
// decoded by flooring. The three best-ever candidates (alpha, beta, delta)
// live in an elitist archive and pull every wolf of the pack each iteration.

#include <algorithm>
#include <array>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <variant>
#include <vector>

#include "gwoens/rng.hpp"

namespace gwoens::gwo {

inline constexpr double kInfinity = std::numeric_limits<double>::infinity();

struct Continuous {
  double lo = 0.0;
  double hi = 1.0;
  bool log_scaled = false;
};

struct Integer {
  std::int64_t lo = 0;
  std::int64_t hi = 1;
};

struct Categorical {
  std::size_t option_count = 2;
};

class DimensionSpec {
 public:
  using Kind = std::variant<Continuous, Integer, Categorical>;

  DimensionSpec(std::string name, Kind kind) : name_(std::move(name)), kind_(kind) { validate(); }

  static DimensionSpec continuous(std::string name, double lo, double hi, bool log_scaled = false) {
    return {std::move(name), Continuous{lo, hi, log_scaled}};
  }
  static DimensionSpec integer(std::string name, std::int64_t lo, std::int64_t hi) {
    return {std::move(name), Integer{lo, hi}};
  }
  static DimensionSpec categorical(std::string name, std::size_t option_count) {
    return {std::move(name), Categorical{option_count}};
  }

  const std::string& name() const { return name_; }
  const Kind& kind() const { return kind_; }

  /// Lower end of the real interval that carries this dimension.
  double carrier_lo() const {
    return std::visit(
        [](const auto& k) -> double {
          using K = std::decay_t<decltype(k)>;
          if constexpr (std::is_same_v<K, Continuous>) return k.log_scaled ? std::log10(k.lo) : k.lo;
          else if constexpr (std::is_same_v<K, Integer>) return static_cast<double>(k.lo);
          else return 0.0;
        },
        kind_);
  }

  /// Upper end of the carrier. For floored kinds this is the largest double
  /// strictly below hi + 1 (resp. option_count), so decoding never overshoots.
  double carrier_hi() const {
    return std::visit(
        [](const auto& k) -> double {
          using K = std::decay_t<decltype(k)>;
          if constexpr (std::is_same_v<K, Continuous>) {
            return k.log_scaled ? std::log10(k.hi) : k.hi;
          } else if constexpr (std::is_same_v<K, Integer>) {
            return std::nextafter(static_cast<double>(k.hi + 1), -kInfinity);
          } else {
            return std::nextafter(static_cast<double>(k.option_count), -kInfinity);
          }
        },
        kind_);
  }

  double clamp(double coord) const {
    if (std::isnan(coord)) return carrier_lo();
    return std::clamp(coord, carrier_lo(), carrier_hi());
  }

  double decode(double coord) const {
    return std::visit(
        [coord](const auto& k) -> double {
          using K = std::decay_t<decltype(k)>;
          if constexpr (std::is_same_v<K, Continuous>) {
            const double v = k.log_scaled ? std::pow(10.0, coord) : coord;
            return std::clamp(v, k.lo, k.hi);
          } else if constexpr (std::is_same_v<K, Integer>) {
            return std::clamp(std::floor(coord), static_cast<double>(k.lo), static_cast<double>(k.hi));
          } else {
            return std::clamp(std::floor(coord), 0.0, static_cast<double>(k.option_count - 1));
          }
        },
        kind_);
  }

  /// Inverse of decode: a carrier coordinate that decodes to `value`.
  double encode(double value) const {
    return std::visit(
        [value](const auto& k) -> double {
          using K = std::decay_t<decltype(k)>;
          if constexpr (std::is_same_v<K, Continuous>) return k.log_scaled ? std::log10(value) : value;
          else return std::floor(value) + 0.5;
        },
        kind_);
  }

  bool contains(double decoded) const {
    return std::visit(
        [decoded](const auto& k) -> bool {
          using K = std::decay_t<decltype(k)>;
          if constexpr (std::is_same_v<K, Continuous>) {
            return decoded >= k.lo && decoded <= k.hi;
          } else if constexpr (std::is_same_v<K, Integer>) {
            return decoded == std::floor(decoded) && decoded >= static_cast<double>(k.lo) &&
                   decoded <= static_cast<double>(k.hi);
          } else {
            return decoded == std::floor(decoded) && decoded >= 0.0 &&
                   decoded < static_cast<double>(k.option_count);
          }
        },
        kind_);
  }

 private:
  void validate() const {
    std::visit(
        [this](const auto& k) {
          using K = std::decay_t<decltype(k)>;
          if constexpr (std::is_same_v<K, Continuous>) {
            if (!std::isfinite(k.lo) || !std::isfinite(k.hi) || !(k.lo < k.hi))
              throw std::invalid_argument("dimension '" + name_ + "': need finite lo < hi");
            if (k.log_scaled && k.lo <= 0.0)
              throw std::invalid_argument("dimension '" + name_ + "': log-scaled bounds must be positive");
          } else if constexpr (std::is_same_v<K, Integer>) {
            if (k.hi < k.lo + 1)
              throw std::invalid_argument("dimension '" + name_ + "': integer range needs hi >= lo + 1");
          } else {
            if (k.option_count < 2)
              throw std::invalid_argument("dimension '" + name_ + "': categorical needs >= 2 options");
          }
        },
        kind_);
  }

  std::string name_;
  Kind kind_;
};

class SearchSpace {
 public:
  explicit SearchSpace(std::vector<DimensionSpec> dims) : dims_(std::move(dims)) {
    if (dims_.empty()) throw std::invalid_argument("search space must have at least one dimension");
  }

  std::size_t size() const { return dims_.size(); }
  const DimensionSpec& operator[](std::size_t i) const { return dims_[i]; }
  const std::vector<DimensionSpec>& dims() const { return dims_; }

 private:
  std::vector<DimensionSpec> dims_;
};

/// Carrier coordinates, one per dimension.
using Position = std::vector<double>;

/// A point of the search space in user units. Integer and categorical values
/// are stored as whole numbers.
struct DecodedSolution {
  std::vector<double> values;

  double real(std::size_t i) const { return values.at(i); }
  std::int64_t integer(std::size_t i) const { return static_cast<std::int64_t>(values.at(i)); }
  std::size_t option(std::size_t i) const { return static_cast<std::size_t>(values.at(i)); }
};

struct GwoConfig {
  std::size_t pop_size = 10;
  std::size_t iterations = 30;
  std::uint64_t seed = 0;
  std::vector<Position> seeded_candidates;
  // Concurrent objective evaluations per iteration. Results do not depend on it.
  std::size_t threads = 1;
};

struct Candidate {
  Position position;
  double fitness = kInfinity;
};

/// Elitist archive of the three best candidates evaluated so far, ordered
/// alpha, beta, delta.
class Leaders {
 public:
  /// Offers a freshly evaluated candidate. Ties keep the earlier entry.
  void offer(const Position& position, double fitness) {
    if (count_ == 3 && !(fitness < slots_[2].fitness)) return;
    std::size_t at = count_ < 3 ? count_ : 2;
    while (at > 0 && fitness < slots_[at - 1].fitness) {
      slots_[at] = slots_[at - 1];
      --at;
    }
    slots_[at] = Candidate{position, fitness};
    if (count_ < 3) ++count_;
  }

  std::size_t size() const { return count_; }
  bool full() const { return count_ == 3; }
  const Candidate& alpha() const { return slots_[0]; }
  const Candidate& beta() const { return slots_[1]; }
  const Candidate& delta() const { return slots_[2]; }
  const Candidate& operator[](std::size_t i) const { return slots_.at(i); }

 private:
  std::array<Candidate, 3> slots_{};
  std::size_t count_ = 0;
};

struct Trace {
  std::vector<double> best_fitness_per_iteration;
  double wall_time_seconds = 0.0;
  std::size_t evaluations = 0;
  // Evaluations whose objective threw or returned a non-finite value.
  std::size_t failed_evaluations = 0;
};

struct Result {
  DecodedSolution solution;
  Position position;
  double fitness = kInfinity;
  Trace trace;
};

/// Exploration coefficient, decreasing linearly from 2 at t = 0 to 0 at t = T.
inline double coefficient_a(std::size_t t, std::size_t total) {
  if (total == 0) throw std::invalid_argument("coefficient_a: total iterations must be >= 1");
  if (t > total) throw std::invalid_argument("coefficient_a: t must not exceed total iterations");
  return 2.0 * (1.0 - static_cast<double>(t) / static_cast<double>(total));
}

struct Coefficients {
  std::vector<double> A;
  std::vector<double> C;
};

inline Coefficients coefficient_vectors(double a, const std::vector<double>& r1, const std::vector<double>& r2) {
  if (r1.size() != r2.size()) throw std::invalid_argument("coefficient_vectors: r1/r2 length mismatch");
  Coefficients out{std::vector<double>(r1.size()), std::vector<double>(r2.size())};
  for (std::size_t i = 0; i < r1.size(); ++i) {
    out.A[i] = 2.0 * a * r1[i] - a;
    out.C[i] = 2.0 * r2[i];
  }
  return out;
}

/// One encircling move of `x` towards `leader`: D = |C*leader - x|, x' = leader - A*D.
inline Position encircle_step(const Position& x, const Position& leader, const std::vector<double>& A,
                              const std::vector<double>& C) {
  const std::size_t n = x.size();
  if (leader.size() != n || A.size() != n || C.size() != n)
    throw std::invalid_argument("encircle_step: length mismatch");
  Position out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double d = std::abs(C[i] * leader[i] - x[i]);
    out[i] = leader[i] - A[i] * d;
  }
  return out;
}

/// Moves one wolf: for alpha, beta and delta in turn, draws r1 (n values)
/// then r2 (n values) from `rng`, takes an encircling step towards that
/// leader, and returns the mean of the three proposals.
inline Position pack_update(const Position& x, const Leaders& leaders, double a, Rng& rng) {
  if (!leaders.full()) throw std::logic_error("pack_update: leaders not populated");
  const std::size_t n = x.size();
  Position sum(n, 0.0);
  std::vector<double> r1(n), r2(n);
  for (std::size_t l = 0; l < 3; ++l) {
    const Position& lead = leaders[l].position;
    if (lead.size() != n) throw std::invalid_argument("pack_update: leader dimension mismatch");
    for (auto& r : r1) r = rng.uniform();
    for (auto& r : r2) r = rng.uniform();
    const auto [A, C] = coefficient_vectors(a, r1, r2);
    const Position step = encircle_step(x, lead, A, C);
    for (std::size_t i = 0; i < n; ++i) sum[i] += step[i];
  }
  for (auto& v : sum) v /= 3.0;
  return sum;
}

inline Position clamp(const Position& p, const SearchSpace& space) {
  if (p.size() != space.size()) throw std::invalid_argument("clamp: dimension count mismatch");
  Position out(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) out[i] = space[i].clamp(p[i]);
  return out;
}

inline DecodedSolution decode(const Position& p, const SearchSpace& space) {
  if (p.size() != space.size()) throw std::invalid_argument("decode: dimension count mismatch");
  DecodedSolution out;
  out.values.resize(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) out.values[i] = space[i].decode(p[i]);
  return out;
}

inline Position encode(const DecodedSolution& s, const SearchSpace& space) {
  if (s.values.size() != space.size()) throw std::invalid_argument("encode: dimension count mismatch");
  Position out(s.values.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = space[i].clamp(space[i].encode(s.values[i]));
  return out;
}

inline bool within_bounds(const DecodedSolution& s, const SearchSpace& space) {
  if (s.values.size() != space.size()) return false;
  for (std::size_t i = 0; i < space.size(); ++i)
    if (!space[i].contains(s.values[i])) return false;
  return true;
}

namespace detail {

template <typename Fn>
void parallel_for(std::size_t n, std::size_t threads, Fn&& fn) {
  threads = std::max<std::size_t>(1, std::min(threads, n));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (std::size_t t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) fn(i);
    });
  }
  for (auto& th : pool) th.join();
}

}  // namespace detail

/// Minimizes `objective` (DecodedSolution -> double) over `space`.
///
/// Thrown exceptions and non-finite values count as +infinity. The objective
/// is called pop_size * (iterations + 1) times. With threads > 1 it must be
/// safe to call concurrently; the result is identical to a sequential run.
template <typename Objective>
Result optimize(Objective&& objective, const SearchSpace& space, const GwoConfig& config) {
  if (config.pop_size < 4) throw std::invalid_argument("gwo: pop_size must be >= 4");
  if (config.iterations < 1) throw std::invalid_argument("gwo: iterations must be >= 1");
  if (config.seeded_candidates.size() > config.pop_size)
    throw std::invalid_argument("gwo: more seeded candidates than pop_size");

  const auto started = std::chrono::steady_clock::now();
  const std::size_t n = space.size();
  const std::size_t pop = config.pop_size;

  std::vector<Rng> streams;
  streams.reserve(pop);
  for (std::size_t w = 0; w < pop; ++w) streams.emplace_back(derive_seed(config.seed, w));

  std::vector<Position> wolves(pop);
  for (std::size_t w = 0; w < pop; ++w) {
    if (w < config.seeded_candidates.size()) {
      if (config.seeded_candidates[w].size() != n)
        throw std::invalid_argument("gwo: seeded candidate has wrong dimension");
      wolves[w] = clamp(config.seeded_candidates[w], space);
      continue;
    }
    wolves[w].resize(n);
    for (std::size_t d = 0; d < n; ++d)
      wolves[w][d] = space[d].clamp(streams[w].uniform(space[d].carrier_lo(), space[d].carrier_hi()));
  }

  Trace trace;
  std::vector<double> fitness(pop);
  std::vector<char> failed(pop);
  auto evaluate_all = [&] {
    detail::parallel_for(pop, config.threads, [&](std::size_t w) {
      double f = kInfinity;
      bool bad = false;
      try {
        f = static_cast<double>(objective(decode(wolves[w], space)));
        if (!std::isfinite(f)) {
          f = kInfinity;
          bad = true;
        }
      } catch (...) {
        f = kInfinity;
        bad = true;
      }
      fitness[w] = f;
      failed[w] = bad;
    });
    trace.evaluations += pop;
    for (std::size_t w = 0; w < pop; ++w) trace.failed_evaluations += failed[w] ? 1 : 0;
  };

  Leaders leaders;
  evaluate_all();
  for (std::size_t w = 0; w < pop; ++w) leaders.offer(wolves[w], fitness[w]);

  trace.best_fitness_per_iteration.reserve(config.iterations);
  for (std::size_t t = 0; t < config.iterations; ++t) {
    const double a = coefficient_a(t, config.iterations);
    for (std::size_t w = 0; w < pop; ++w) wolves[w] = clamp(pack_update(wolves[w], leaders, a, streams[w]), space);
    evaluate_all();
    for (std::size_t w = 0; w < pop; ++w) leaders.offer(wolves[w], fitness[w]);
    trace.best_fitness_per_iteration.push_back(leaders.alpha().fitness);
  }

  trace.wall_time_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();

  Result result;
  result.position = leaders.alpha().position;
  result.solution = decode(result.position, space);
  result.fitness = leaders.alpha().fitness;
  result.trace = std::move(trace);
  return result;
}

}  // namespace gwoens::gwo
