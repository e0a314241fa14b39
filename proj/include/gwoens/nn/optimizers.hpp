#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "gwoens/nn/tensor.hpp"

namespace gwoens::nn {

// Categorical index order of the optimizer search dimension.
enum class OptimizerKind { SGD, RMSprop, Adagrad, Adadelta, AdamW, Adam, Adamax };

inline constexpr std::array<OptimizerKind, 7> kAllOptimizers = {
    OptimizerKind::SGD,  OptimizerKind::RMSprop, OptimizerKind::Adagrad, OptimizerKind::Adadelta,
    OptimizerKind::AdamW, OptimizerKind::Adam,    OptimizerKind::Adamax};

inline std::string_view to_string(OptimizerKind kind) {
  switch (kind) {
    case OptimizerKind::SGD: return "SGD";
    case OptimizerKind::RMSprop: return "RMSprop";
    case OptimizerKind::Adagrad: return "Adagrad";
    case OptimizerKind::Adadelta: return "Adadelta";
    case OptimizerKind::AdamW: return "AdamW";
    case OptimizerKind::Adam: return "Adam";
    case OptimizerKind::Adamax: return "Adamax";
  }
  throw std::invalid_argument("unknown optimizer kind");
}

inline OptimizerKind optimizer_from_index(std::size_t index) {
  if (index >= kAllOptimizers.size())
    throw std::invalid_argument("unknown optimizer index " + std::to_string(index));
  return kAllOptimizers[index];
}

inline OptimizerKind parse_optimizer(std::string_view name) {
  for (auto k : kAllOptimizers)
    if (to_string(k) == name) return k;
  throw std::invalid_argument("unknown optimizer '" + std::string(name) + "'");
}

struct OptimizerSpec {
  OptimizerKind kind = OptimizerKind::Adam;
  double learning_rate = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double rmsprop_rho = 0.9;
  double adadelta_rho = 0.95;
  double weight_decay = 0.01;  // AdamW only
};

/// Per-parameter-tensor optimizer memory. `first` holds momentum-like
/// averages, `second` squared-gradient averages (Adadelta keeps its update
/// accumulator in `first`).
struct OptimizerState {
  std::vector<double> first;
  std::vector<double> second;
  std::size_t steps = 0;
};

/// One in-place update of `params` with gradient `grads`.
inline void optimizer_step(const OptimizerSpec& spec, std::span<double> params, std::span<const double> grads,
                           OptimizerState& state) {
  if (params.size() != grads.size()) throw std::invalid_argument("optimizer_step: param/grad size mismatch");
  const std::size_t n = params.size();
  if (state.first.size() != n) state.first.assign(n, 0.0);
  if (state.second.size() != n) state.second.assign(n, 0.0);
  ++state.steps;
  const double lr = spec.learning_rate;
  const double eps = spec.epsilon;
  auto& m = state.first;
  auto& v = state.second;

  switch (spec.kind) {
    case OptimizerKind::SGD:
      for (std::size_t i = 0; i < n; ++i) params[i] -= lr * grads[i];
      return;
    case OptimizerKind::RMSprop: {
      const double rho = spec.rmsprop_rho;
      for (std::size_t i = 0; i < n; ++i) {
        v[i] = rho * v[i] + (1.0 - rho) * grads[i] * grads[i];
        params[i] -= lr * grads[i] / (std::sqrt(v[i]) + eps);
      }
      return;
    }
    case OptimizerKind::Adagrad:
      for (std::size_t i = 0; i < n; ++i) {
        v[i] += grads[i] * grads[i];
        params[i] -= lr * grads[i] / (std::sqrt(v[i]) + eps);
      }
      return;
    case OptimizerKind::Adadelta: {
      const double rho = spec.adadelta_rho;
      for (std::size_t i = 0; i < n; ++i) {
        v[i] = rho * v[i] + (1.0 - rho) * grads[i] * grads[i];
        const double delta = std::sqrt(m[i] + eps) / std::sqrt(v[i] + eps) * grads[i];
        m[i] = rho * m[i] + (1.0 - rho) * delta * delta;
        params[i] -= lr * delta;
      }
      return;
    }
    case OptimizerKind::Adam:
    case OptimizerKind::AdamW: {
      const double b1 = spec.beta1, b2 = spec.beta2;
      const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.steps));
      const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.steps));
      const double decay = spec.kind == OptimizerKind::AdamW ? 1.0 - lr * spec.weight_decay : 1.0;
      for (std::size_t i = 0; i < n; ++i) {
        m[i] = b1 * m[i] + (1.0 - b1) * grads[i];
        v[i] = b2 * v[i] + (1.0 - b2) * grads[i] * grads[i];
        const double step = lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps);
        if (spec.kind == OptimizerKind::AdamW) params[i] *= decay;
        params[i] -= step;
      }
      return;
    }
    case OptimizerKind::Adamax: {
      const double b1 = spec.beta1, b2 = spec.beta2;
      const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.steps));
      for (std::size_t i = 0; i < n; ++i) {
        m[i] = b1 * m[i] + (1.0 - b1) * grads[i];
        v[i] = std::max(b2 * v[i], std::abs(grads[i]));
        params[i] -= (lr / c1) * m[i] / (v[i] + eps);
      }
      return;
    }
  }
  throw std::invalid_argument("optimizer_step: unknown optimizer kind");
}

/// Applies one optimizer to a fixed list of parameter tensors.
class Optimizer {
 public:
  explicit Optimizer(OptimizerSpec spec) : spec_(spec) {
    if (!(spec.learning_rate > 0.0)) throw std::invalid_argument("optimizer: learning_rate must be positive");
  }

  void step(std::span<Parameter* const> params) {
    if (states_.size() != params.size()) states_.assign(params.size(), {});
    for (std::size_t i = 0; i < params.size(); ++i)
      optimizer_step(spec_, params[i]->value.values(), params[i]->grad.values(), states_[i]);
  }

  const OptimizerSpec& spec() const { return spec_; }

 private:
  OptimizerSpec spec_;
  std::vector<OptimizerState> states_;
};

}  // namespace gwoens::nn
