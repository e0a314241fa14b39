#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

#include "gwoens/nn/network.hpp"

namespace gwoens::nn {

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::string worst;  // "<parameter>[index]" or "input[index]"
  std::size_t checked = 0;
};

// Below the floor, central differences are dominated by rounding
// (about |loss| * 1e-16 / eps), so tiny gradients are compared absolutely.
inline constexpr double kRelativeErrorFloor = 1e-8;

inline double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), kRelativeErrorFloor});
}

/// Compares analytic gradients of mse(net(x), target) with central
/// differences, for every parameter element and every input element.
/// Forward passes run in Train mode with a dropout stream reseeded from
/// `mask_seed` each time, so any dropout mask stays pinned.
inline GradCheckResult grad_check(Network& net, const Tensor& x, const Tensor& target, double eps = 1e-5,
                                  std::uint64_t mask_seed = 0) {
  if (!(eps >= 1e-7 && eps <= 1e-3)) throw std::invalid_argument("grad_check: eps must be in [1e-7, 1e-3]");

  auto loss_at = [&](const Tensor& input) {
    Rng rng(mask_seed);
    return mse_loss(net.forward(input, Mode::Train, rng), target).value;
  };

  net.zero_grad();
  Rng rng(mask_seed);
  const Loss loss = mse_loss(net.forward(x, Mode::Train, rng), target);
  const Tensor input_grad = net.backward(loss.gradient);

  GradCheckResult result;
  auto record = [&](double analytic, double numeric, const std::string& where) {
    const double err = relative_error(analytic, numeric);
    ++result.checked;
    if (result.worst.empty() || err > result.max_relative_error) {
      result.max_relative_error = err;
      result.worst = where;
    }
  };

  for (auto* p : net.parameters()) {
    const Tensor analytic = p->grad;
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double saved = p->value[i];
      p->value[i] = saved + eps;
      const double up = loss_at(x);
      p->value[i] = saved - eps;
      const double down = loss_at(x);
      p->value[i] = saved;
      record(analytic[i], (up - down) / (2.0 * eps), p->name + "[" + std::to_string(i) + "]");
    }
  }

  Tensor probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    probe[i] = x[i] + eps;
    const double up = loss_at(probe);
    probe[i] = x[i] - eps;
    const double down = loss_at(probe);
    probe[i] = x[i];
    record(input_grad[i], (up - down) / (2.0 * eps), "input[" + std::to_string(i) + "]");
  }
  return result;
}

}  // namespace gwoens::nn
