#pragma once

// Static weighted blending of member forecasts, with simplex weights found
// by the grey wolf optimizer.

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "gwoens/forecasters.hpp"
#include "gwoens/gwo.hpp"
#include "gwoens/metrics.hpp"
#include "gwoens/nn/tensor.hpp"

namespace gwoens::ensemble {

inline constexpr const char* kEnsembleLabel = "GWO-Ensemble";

/// Non-negative weights summing to one.
struct WeightVector {
  std::vector<double> w;

  std::size_t size() const { return w.size(); }
  double operator[](std::size_t i) const { return w[i]; }
};

inline WeightVector normalize_weights(std::span<const double> raw) {
  if (raw.empty()) throw std::invalid_argument("normalize_weights: empty input");
  double total = 0.0;
  for (double r : raw) {
    if (!(r >= 0.0) || !std::isfinite(r))
      throw std::invalid_argument("normalize_weights: weights must be finite and non-negative");
    total += r;
  }
  if (total == 0.0) throw std::invalid_argument("normalize_weights: all weights are zero");
  WeightVector out{std::vector<double>(raw.begin(), raw.end())};
  for (auto& v : out.w) v /= total;
  return out;
}

/// out = sum_k w_k * forecasts_k, element-wise.
inline nn::Tensor blend(std::span<const nn::Tensor> forecasts, const WeightVector& weights) {
  if (forecasts.empty()) throw std::invalid_argument("blend: no forecasts");
  if (forecasts.size() != weights.size())
    throw std::invalid_argument("blend: " + std::to_string(forecasts.size()) + " forecasts but " +
                                std::to_string(weights.size()) + " weights");
  for (const auto& f : forecasts)
    if (f.shape() != forecasts.front().shape())
      throw std::invalid_argument("blend: shape mismatch " + nn::to_string(f.shape()) + " vs " +
                                  nn::to_string(forecasts.front().shape()));
  nn::Tensor out(forecasts.front().shape());
  for (std::size_t k = 0; k < forecasts.size(); ++k)
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += weights[k] * forecasts[k][i];
  return out;
}

inline forecast::ForecastMatrix blend(std::span<const forecast::ForecastMatrix> members, const WeightVector& weights) {
  std::vector<nn::Tensor> values;
  values.reserve(members.size());
  for (const auto& m : members) {
    if (!members.empty() && m.target_rows != members.front().target_rows)
      throw std::invalid_argument("blend: member " + m.model_label + " forecasts different target rows");
    values.push_back(m.values);
  }
  return {blend(values, weights), kEnsembleLabel, members.empty() ? std::vector<std::size_t>{} : members.front().target_rows};
}

struct BlendResult {
  WeightVector weights;
  double validation_mse = 0.0;
  gwo::Result search;
};

/// Fits blend weights to `targets` by minimizing MSE over raw weights in
/// [0, 1]^K, normalized by their sum. The initial pack holds every one-hot
/// vector and the uniform vector, so the result is never worse than the best
/// single member on the fitting data.
inline BlendResult optimize_weights(std::span<const nn::Tensor> forecasts, const nn::Tensor& targets,
                                    gwo::GwoConfig config) {
  const std::size_t K = forecasts.size();
  if (K < 2) throw std::invalid_argument("optimize_weights: need at least two members");
  for (const auto& f : forecasts)
    if (f.shape() != targets.shape())
      throw std::invalid_argument("optimize_weights: forecast shape " + nn::to_string(f.shape()) +
                                  " does not match targets " + nn::to_string(targets.shape()));

  std::vector<gwo::DimensionSpec> dims;
  for (std::size_t k = 0; k < K; ++k) dims.push_back(gwo::DimensionSpec::continuous("w" + std::to_string(k), 0.0, 1.0));
  const gwo::SearchSpace space(std::move(dims));

  config.seeded_candidates.clear();
  for (std::size_t k = 0; k < K; ++k) {
    gwo::Position one_hot(K, 0.0);
    one_hot[k] = 1.0;
    config.seeded_candidates.push_back(std::move(one_hot));
  }
  config.seeded_candidates.emplace_back(K, 1.0 / static_cast<double>(K));
  config.pop_size = std::max(config.pop_size, config.seeded_candidates.size() + 1);

  auto objective = [&](const gwo::DecodedSolution& s) {
    const nn::Tensor blended = blend(forecasts, normalize_weights(s.values));
    return metrics::mse(targets.values(), blended.values());
  };
  BlendResult out;
  out.search = gwo::optimize(objective, space, config);
  out.weights = normalize_weights(out.search.solution.values);
  out.validation_mse = out.search.fitness;
  return out;
}

}  // namespace gwoens::ensemble
