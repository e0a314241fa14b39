#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "gwoens/nn/layers.hpp"
#include "gwoens/nn/tensor.hpp"
#include "gwoens/rng.hpp"

namespace gwoens::nn {

/// A chain of layers with a fixed per-sample input shape (batch axis excluded).
class Network {
 public:
  explicit Network(Shape sample_input_shape) : input_shape_(std::move(sample_input_shape)) {
    output_shape_ = with_batch(input_shape_, 1);
  }

  Network(const Network& other) : input_shape_(other.input_shape_), output_shape_(other.output_shape_) {
    layers_.reserve(other.layers_.size());
    for (const auto& l : other.layers_) layers_.push_back(l->clone());
  }
  Network& operator=(const Network& other) {
    if (this != &other) *this = Network(other);
    return *this;
  }
  Network(Network&&) noexcept = default;
  Network& operator=(Network&&) noexcept = default;

  /// Appends a layer; throws std::invalid_argument if it cannot consume the
  /// current output shape.
  template <typename L, typename... Args>
  L& add(Args&&... args) {
    auto layer = std::make_unique<L>(std::forward<Args>(args)...);
    output_shape_ = layer->output_shape(output_shape_);
    L& ref = *layer;
    layers_.push_back(std::move(layer));
    return ref;
  }

  /// Per-sample output shape (batch axis excluded).
  Shape output_shape() const { return Shape(output_shape_.begin() + 1, output_shape_.end()); }
  const Shape& input_shape() const { return input_shape_; }
  std::size_t output_features() const { return element_count(output_shape()); }
  std::size_t size() const { return layers_.size(); }
  Layer& layer(std::size_t i) { return *layers_.at(i); }
  const Layer& layer(std::size_t i) const { return *layers_.at(i); }

  Tensor forward(const Tensor& x, Mode mode, Rng& rng) {
    check_input(x);
    Tensor h = x;
    for (auto& l : layers_) h = l->forward(h, mode, rng);
    return h;
  }

  /// Inference without dropout; does not mutate the network.
  Tensor predict(const Tensor& x) const {
    check_input(x);
    if (x.dim(0) == 0) {
      Shape s = output_shape();
      s.insert(s.begin(), 0);
      return Tensor(s);
    }
    Tensor h = x;
    for (const auto& l : layers_) h = l->infer(h);
    return h;
  }

  /// Backpropagates `grad_out` through the cached forward pass, accumulating
  /// parameter gradients. Returns the gradient with respect to the input.
  Tensor backward(const Tensor& grad_out) {
    Tensor g = grad_out;
    for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) g = (*it)->backward(g);
    return g;
  }

  std::vector<Parameter*> parameters() {
    std::vector<Parameter*> out;
    for (auto& l : layers_)
      for (auto* p : l->parameters()) out.push_back(p);
    return out;
  }
  std::vector<const Parameter*> parameters() const {
    std::vector<const Parameter*> out;
    for (const auto& l : layers_)
      for (const auto* p : const_cast<Layer&>(*l).parameters()) out.push_back(p);
    return out;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto* p : parameters()) n += p->value.size();
    return n;
  }

  void zero_grad() {
    for (auto* p : parameters()) p->grad.fill(0.0);
  }

  /// Uniform in +-1/sqrt(fan_in) per parameter tensor, drawn in layer order.
  void initialize(std::uint64_t seed) {
    Rng rng(seed);
    for (auto* p : parameters()) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(p->fan_in));
      for (auto& v : p->value.values()) v = rng.uniform(-bound, bound);
      p->grad.fill(0.0);
    }
  }

  std::vector<Tensor> snapshot() const {
    std::vector<Tensor> out;
    for (const auto* p : parameters()) out.push_back(p->value);
    return out;
  }

  void restore(const std::vector<Tensor>& values) {
    auto params = parameters();
    if (values.size() != params.size()) throw std::invalid_argument("restore: parameter count mismatch");
    for (std::size_t i = 0; i < params.size(); ++i) {
      if (values[i].shape() != params[i]->value.shape())
        throw std::invalid_argument("restore: shape mismatch for " + params[i]->name);
      params[i]->value = values[i];
    }
  }

 private:
  static Shape with_batch(const Shape& s, std::size_t batch) {
    Shape out = s;
    out.insert(out.begin(), batch);
    return out;
  }

  void check_input(const Tensor& x) const {
    if (x.rank() != input_shape_.size() + 1 || !std::equal(input_shape_.begin(), input_shape_.end(), x.shape().begin() + 1))
      throw std::invalid_argument("network: input shape mismatch, expected (batch, " +
                                  to_string(input_shape_).substr(1) + ", got " + to_string(x.shape()));
  }

  Shape input_shape_;
  Shape output_shape_;
  std::vector<std::unique_ptr<Layer>> layers_;
};

struct Loss {
  double value = 0.0;
  Tensor gradient;
};

/// Mean squared error over all elements and its gradient 2 (pred - target) / N.
inline Loss mse_loss(const Tensor& pred, const Tensor& target) {
  if (pred.shape() != target.shape())
    throw std::invalid_argument("mse_loss: shape mismatch " + to_string(pred.shape()) + " vs " +
                                to_string(target.shape()));
  Loss out{0.0, Tensor(pred.shape())};
  const double n = static_cast<double>(pred.size());
  if (pred.size() == 0) return out;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double e = pred[i] - target[i];
    out.value += e * e;
    out.gradient[i] = 2.0 * e / n;
  }
  out.value /= n;
  return out;
}

/// Parameter manifest: names, shapes and row-major values. Doubles are
/// written in shortest round-trip form, so reloading is bit-exact.
inline nlohmann::json save_parameters(const Network& net) {
  nlohmann::json params = nlohmann::json::array();
  for (const auto* p : net.parameters())
    params.push_back({{"name", p->name}, {"shape", p->value.shape()}, {"values", p->value.storage()}});
  return {{"format", "gwoens-parameters-v1"}, {"parameters", std::move(params)}};
}

inline void load_parameters(Network& net, const nlohmann::json& manifest) {
  if (manifest.value("format", "") != "gwoens-parameters-v1")
    throw std::invalid_argument("load_parameters: unrecognized manifest format");
  const auto& entries = manifest.at("parameters");
  auto params = net.parameters();
  if (entries.size() != params.size())
    throw std::invalid_argument("load_parameters: manifest has " + std::to_string(entries.size()) +
                                " tensors, network has " + std::to_string(params.size()));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor t(entries[i].at("shape").get<Shape>(), entries[i].at("values").get<std::vector<double>>());
    if (t.shape() != params[i]->value.shape())
      throw std::invalid_argument("load_parameters: shape mismatch for tensor " + std::to_string(i) + " (" +
                                  params[i]->name + ")");
    params[i]->value = std::move(t);
  }
}

}  // namespace gwoens::nn
