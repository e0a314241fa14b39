#pragma once

#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace gwoens::nn {

using Shape = std::vector<std::size_t>;

inline std::size_t element_count(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string to_string(const Shape& shape) {
  std::string s = "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(shape[i]);
  }
  return s + ")";
}

/// Dense row-major array of doubles.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0) : shape_(std::move(shape)), data_(element_count(shape_), fill) {}
  Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (element_count(shape_) != data_.size())
      throw std::invalid_argument("tensor: shape " + to_string(shape_) + " does not match " +
                                  std::to_string(data_.size()) + " values");
  }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }
  std::vector<double>& storage() { return data_; }
  const std::vector<double>& storage() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

  Tensor reshaped(Shape shape) const { return Tensor(std::move(shape), data_); }

  bool operator==(const Tensor& other) const = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
  // Used by initialization: values are drawn uniform in +-1/sqrt(fan_in).
  std::size_t fan_in = 1;

  Parameter() = default;
  Parameter(std::string n, Shape shape, std::size_t fan)
      : name(std::move(n)), value(shape), grad(shape), fan_in(fan) {}
};

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;
using StridedMap = Eigen::Map<RowMatrix, 0, Eigen::OuterStride<>>;
using ConstStridedMap = Eigen::Map<const RowMatrix, 0, Eigen::OuterStride<>>;
using RowVectorMap = Eigen::Map<Eigen::RowVectorXd>;
using ConstRowVectorMap = Eigen::Map<const Eigen::RowVectorXd>;

/// View of a tensor as (rows x last_dim), collapsing the leading axes.
inline MatrixMap as_matrix(Tensor& t) {
  const std::size_t cols = t.shape().back();
  return MatrixMap(t.data(), static_cast<Eigen::Index>(t.size() / cols), static_cast<Eigen::Index>(cols));
}
inline ConstMatrixMap as_matrix(const Tensor& t) {
  const std::size_t cols = t.shape().back();
  return ConstMatrixMap(t.data(), static_cast<Eigen::Index>(t.size() / cols), static_cast<Eigen::Index>(cols));
}

/// Time slice t of a (batch, time, features) tensor as a (batch x features) matrix.
inline StridedMap time_slice(Tensor& t, std::size_t step) {
  const auto B = t.dim(0), T = t.dim(1), F = t.dim(2);
  return StridedMap(t.data() + step * F, static_cast<Eigen::Index>(B), static_cast<Eigen::Index>(F),
                    Eigen::OuterStride<>(static_cast<Eigen::Index>(T * F)));
}
inline ConstStridedMap time_slice(const Tensor& t, std::size_t step) {
  const auto B = t.dim(0), T = t.dim(1), F = t.dim(2);
  return ConstStridedMap(t.data() + step * F, static_cast<Eigen::Index>(B), static_cast<Eigen::Index>(F),
                         Eigen::OuterStride<>(static_cast<Eigen::Index>(T * F)));
}

}  // namespace gwoens::nn
