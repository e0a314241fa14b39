#pragma once

// Differentiable layers. Sequence tensors are (batch, time, features),
// row-major. forward() caches what backward() needs; infer() is const and
// leaves no trace. backward() accumulates into Parameter::grad and returns
// the gradient with respect to the layer input.

#include <cmath>
#include <cstddef>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "gwoens/nn/tensor.hpp"
#include "gwoens/rng.hpp"

namespace gwoens::nn {

enum class Mode { Train, Infer };
enum class Activation { Linear, Relu };

class Layer {
 public:
  virtual ~Layer() = default;

  virtual std::string kind() const = 0;
  /// Output shape for an input shape including the batch axis; throws
  /// std::invalid_argument naming both shapes when the input does not fit.
  virtual Shape output_shape(const Shape& input) const = 0;
  virtual Tensor forward(const Tensor& x, Mode mode, Rng& rng) = 0;
  virtual Tensor infer(const Tensor& x) const = 0;
  virtual Tensor backward(const Tensor& grad_out) = 0;
  virtual std::vector<Parameter*> parameters() { return {}; }
  virtual std::unique_ptr<Layer> clone() const = 0;

 protected:
  [[noreturn]] void shape_error(const std::string& expected, const Shape& got) const {
    throw std::invalid_argument(kind() + ": shape mismatch, expected " + expected + ", got " + to_string(got));
  }
  [[noreturn]] void no_cache() const {
    throw std::logic_error(kind() + ": backward called without a cached forward pass");
  }
};

namespace detail {

inline RowMatrix sigmoid(const RowMatrix& z) { return (1.0 / (1.0 + (-z.array()).exp())).matrix(); }

inline void relu_inplace(Tensor& y) {
  for (auto& v : y.values()) v = v > 0.0 ? v : 0.0;
}

}  // namespace detail

/// Fully connected layer over the last axis; leading axes are treated as batch.
class Dense final : public Layer {
 public:
  Dense(std::size_t in, std::size_t out, Activation act = Activation::Linear)
      : in_(in), out_(out), act_(act), weight_("dense.weight", {in, out}, in), bias_("dense.bias", {out}, in) {
    if (in == 0 || out == 0) throw std::invalid_argument("Dense: units must be >= 1");
  }

  std::string kind() const override { return "Dense"; }
  std::size_t units() const { return out_; }
  Activation activation() const { return act_; }

  Shape output_shape(const Shape& input) const override {
    if (input.size() < 2 || input.back() != in_) shape_error("(..., " + std::to_string(in_) + ")", input);
    Shape out = input;
    out.back() = out_;
    return out;
  }

  Tensor forward(const Tensor& x, Mode, Rng&) override {
    Tensor y = compute(x);
    input_ = x;
    output_ = y;
    return y;
  }
  Tensor infer(const Tensor& x) const override { return compute(x); }

  Tensor backward(const Tensor& grad_out) override {
    if (!input_) no_cache();
    Tensor dz = grad_out;
    if (act_ == Activation::Relu)
      for (std::size_t i = 0; i < dz.size(); ++i)
        if (!((*output_)[i] > 0.0)) dz[i] = 0.0;
    const auto X = as_matrix(*input_);
    const auto dZ = as_matrix(dz);
    MatrixMap(weight_.grad.data(), in_, out_) += X.transpose() * dZ;
    RowVectorMap(bias_.grad.data(), out_) += dZ.colwise().sum();
    Tensor dx(input_->shape());
    as_matrix(dx) = dZ * ConstMatrixMap(weight_.value.data(), in_, out_).transpose();
    return dx;
  }

  std::vector<Parameter*> parameters() override { return {&weight_, &bias_}; }
  std::unique_ptr<Layer> clone() const override { return std::make_unique<Dense>(*this); }

 private:
  Tensor compute(const Tensor& x) const {
    Tensor y(output_shape(x.shape()));
    auto Y = as_matrix(y);
    Y.noalias() = as_matrix(x) * ConstMatrixMap(weight_.value.data(), in_, out_);
    Y.rowwise() += ConstRowVectorMap(bias_.value.data(), out_);
    if (act_ == Activation::Relu) detail::relu_inplace(y);
    return y;
  }

  std::size_t in_, out_;
  Activation act_;
  Parameter weight_, bias_;
  std::optional<Tensor> input_, output_;
};

/// Shared shape logic of the unidirectional recurrent layers.
class RecurrentBase : public Layer {
 public:
  RecurrentBase(std::size_t in, std::size_t hidden, bool return_sequences, bool reverse)
      : in_(in), hidden_(hidden), return_sequences_(return_sequences), reverse_(reverse) {
    if (in == 0) throw std::invalid_argument("recurrent layer: input features must be >= 1");
    if (hidden == 0) throw std::invalid_argument("recurrent layer: hidden_units must be >= 1");
  }

  std::size_t hidden() const { return hidden_; }
  bool return_sequences() const { return return_sequences_; }
  bool reverse() const { return reverse_; }

  Shape output_shape(const Shape& input) const override {
    if (input.size() != 3 || input[2] != in_ || input[1] == 0)
      shape_error("(batch, time, " + std::to_string(in_) + ")", input);
    if (return_sequences_) return {input[0], input[1], hidden_};
    return {input[0], hidden_};
  }

 protected:
  std::size_t time_index(std::size_t step, std::size_t T) const { return reverse_ ? T - 1 - step : step; }

  std::size_t in_, hidden_;
  bool return_sequences_, reverse_;
};

/// LSTM with gate order (input, forget, cell, output). With reverse = true the
/// sequence is consumed from the last step to the first; per-step outputs are
/// still written at their original time index.
class Lstm final : public RecurrentBase {
 public:
  Lstm(std::size_t in, std::size_t hidden, bool return_sequences = true, bool reverse = false)
      : RecurrentBase(in, hidden, return_sequences, reverse),
        w_("lstm.w", {in, 4 * hidden}, in),
        u_("lstm.u", {hidden, 4 * hidden}, hidden),
        b_("lstm.b", {4 * hidden}, hidden) {}

  std::string kind() const override { return "Lstm"; }

  Tensor forward(const Tensor& x, Mode, Rng&) override {
    Cache cache;
    Tensor y = compute(x, &cache);
    cache_ = std::move(cache);
    return y;
  }
  Tensor infer(const Tensor& x) const override { return compute(x, nullptr); }

  Tensor backward(const Tensor& grad_out) override {
    if (!cache_) no_cache();
    const Cache& c = *cache_;
    const auto B = c.x.dim(0), T = c.x.dim(1), H = hidden_;
    const ConstMatrixMap W(w_.value.data(), in_, 4 * H), U(u_.value.data(), H, 4 * H);
    MatrixMap dW(w_.grad.data(), in_, 4 * H), dU(u_.grad.data(), H, 4 * H);
    RowVectorMap db(b_.grad.data(), 4 * H);

    Tensor dx(c.x.shape());
    RowMatrix dh = RowMatrix::Zero(B, H), dc = RowMatrix::Zero(B, H), dz(B, 4 * H);
    for (std::size_t s = T; s-- > 0;) {
      const std::size_t t = time_index(s, T);
      if (return_sequences_) dh += time_slice(grad_out, t);
      else if (s == T - 1) dh += as_matrix(grad_out);

      const RowMatrix& g = c.gates[s];
      const auto i = g.leftCols(H).array();
      const auto f = g.middleCols(H, H).array();
      const auto cand = g.middleCols(2 * H, H).array();
      const auto o = g.rightCols(H).array();
      const auto tc = c.tanh_cell[s].array();

      dc.array() += dh.array() * o * (1.0 - tc * tc);
      dz.leftCols(H).array() = dc.array() * cand * i * (1.0 - i);
      dz.middleCols(H, H).array() = dc.array() * c.cell[s].array() * f * (1.0 - f);
      dz.middleCols(2 * H, H).array() = dc.array() * i * (1.0 - cand * cand);
      dz.rightCols(H).array() = dh.array() * tc * o * (1.0 - o);

      const auto xt = time_slice(c.x, t);
      dW.noalias() += xt.transpose() * dz;
      dU.noalias() += c.hidden[s].transpose() * dz;
      db += dz.colwise().sum();
      time_slice(dx, t).noalias() = dz * W.transpose();
      dh.noalias() = dz * U.transpose();
      dc.array() *= f;
    }
    return dx;
  }

  std::vector<Parameter*> parameters() override { return {&w_, &u_, &b_}; }
  std::unique_ptr<Layer> clone() const override { return std::make_unique<Lstm>(*this); }

 private:
  struct Cache {
    Tensor x;
    std::vector<RowMatrix> gates;      // activated gates per processing step
    std::vector<RowMatrix> cell;       // cell state before step s (index s), size T + 1
    std::vector<RowMatrix> tanh_cell;  // tanh of the cell state after step s
    std::vector<RowMatrix> hidden;     // hidden state before step s, size T + 1
  };

  Tensor compute(const Tensor& x, Cache* cache) const {
    Tensor y(output_shape(x.shape()));
    const auto B = x.dim(0), T = x.dim(1), H = hidden_;
    const ConstMatrixMap W(w_.value.data(), in_, 4 * H), U(u_.value.data(), H, 4 * H);
    const ConstRowVectorMap b(b_.value.data(), 4 * H);
    RowMatrix h = RowMatrix::Zero(B, H), c = RowMatrix::Zero(B, H), z(B, 4 * H);
    if (cache) {
      cache->x = x;
      cache->gates.reserve(T);
      cache->tanh_cell.reserve(T);
      cache->cell.assign(1, c);
      cache->hidden.assign(1, h);
    }
    for (std::size_t s = 0; s < T; ++s) {
      const std::size_t t = time_index(s, T);
      z.noalias() = time_slice(x, t) * W;
      z.noalias() += h * U;
      z.rowwise() += b;
      z.leftCols(2 * H) = detail::sigmoid(z.leftCols(2 * H));
      z.middleCols(2 * H, H) = z.middleCols(2 * H, H).array().tanh().matrix();
      z.rightCols(H) = detail::sigmoid(z.rightCols(H));
      c = (z.middleCols(H, H).array() * c.array() + z.leftCols(H).array() * z.middleCols(2 * H, H).array())
              .matrix();
      RowMatrix tc = c.array().tanh().matrix();
      h = (z.rightCols(H).array() * tc.array()).matrix();
      if (return_sequences_) time_slice(y, t) = h;
      if (cache) {
        cache->gates.push_back(z);
        cache->cell.push_back(c);
        cache->tanh_cell.push_back(std::move(tc));
        cache->hidden.push_back(h);
      }
    }
    if (!return_sequences_) as_matrix(y) = h;
    return y;
  }

  Parameter w_, u_, b_;
  std::optional<Cache> cache_;
};

/// GRU with gate order (reset, update, candidate):
///   r = s(x Wr + h Ur + br), z = s(x Wz + h Uz + bz),
///   n = tanh(x Wn + (r * h) Un + bn), h' = (1 - z) * n + z * h.
class Gru final : public RecurrentBase {
 public:
  Gru(std::size_t in, std::size_t hidden, bool return_sequences = true, bool reverse = false)
      : RecurrentBase(in, hidden, return_sequences, reverse),
        w_("gru.w", {in, 3 * hidden}, in),
        u_("gru.u", {hidden, 3 * hidden}, hidden),
        b_("gru.b", {3 * hidden}, hidden) {}

  std::string kind() const override { return "Gru"; }

  Tensor forward(const Tensor& x, Mode, Rng&) override {
    Cache cache;
    Tensor y = compute(x, &cache);
    cache_ = std::move(cache);
    return y;
  }
  Tensor infer(const Tensor& x) const override { return compute(x, nullptr); }

  Tensor backward(const Tensor& grad_out) override {
    if (!cache_) no_cache();
    const Cache& c = *cache_;
    const auto B = c.x.dim(0), T = c.x.dim(1), H = hidden_;
    const ConstMatrixMap W(w_.value.data(), in_, 3 * H), U(u_.value.data(), H, 3 * H);
    MatrixMap dW(w_.grad.data(), in_, 3 * H), dU(u_.grad.data(), H, 3 * H);
    RowVectorMap db(b_.grad.data(), 3 * H);

    Tensor dx(c.x.shape());
    RowMatrix dh = RowMatrix::Zero(B, H), da(B, 3 * H), drh(B, H);
    for (std::size_t s = T; s-- > 0;) {
      const std::size_t t = time_index(s, T);
      if (return_sequences_) dh += time_slice(grad_out, t);
      else if (s == T - 1) dh += as_matrix(grad_out);

      const RowMatrix& g = c.gates[s];
      const auto r = g.leftCols(H).array();
      const auto z = g.middleCols(H, H).array();
      const auto n = g.rightCols(H).array();
      const RowMatrix& hp = c.hidden[s];

      // candidate pre-activation
      da.rightCols(H).array() = dh.array() * (1.0 - z) * (1.0 - n * n);
      drh.noalias() = da.rightCols(H) * U.rightCols(H).transpose();
      da.leftCols(H).array() = drh.array() * hp.array() * r * (1.0 - r);
      da.middleCols(H, H).array() = dh.array() * (hp.array() - n) * z * (1.0 - z);

      const auto xt = time_slice(c.x, t);
      dW.noalias() += xt.transpose() * da;
      dU.leftCols(2 * H).noalias() += hp.transpose() * da.leftCols(2 * H);
      dU.rightCols(H).noalias() += c.reset_hidden[s].transpose() * da.rightCols(H);
      db += da.colwise().sum();
      time_slice(dx, t).noalias() = da * W.transpose();

      RowMatrix dh_prev = (dh.array() * z + drh.array() * r).matrix();
      dh_prev.noalias() += da.leftCols(2 * H) * U.leftCols(2 * H).transpose();
      dh = std::move(dh_prev);
    }
    return dx;
  }

  std::vector<Parameter*> parameters() override { return {&w_, &u_, &b_}; }
  std::unique_ptr<Layer> clone() const override { return std::make_unique<Gru>(*this); }

 private:
  struct Cache {
    Tensor x;
    std::vector<RowMatrix> gates;         // r, z, n per step
    std::vector<RowMatrix> hidden;        // hidden state before step s, size T + 1
    std::vector<RowMatrix> reset_hidden;  // r * h_prev per step
  };

  Tensor compute(const Tensor& x, Cache* cache) const {
    Tensor y(output_shape(x.shape()));
    const auto B = x.dim(0), T = x.dim(1), H = hidden_;
    const ConstMatrixMap W(w_.value.data(), in_, 3 * H), U(u_.value.data(), H, 3 * H);
    const ConstRowVectorMap b(b_.value.data(), 3 * H);
    RowMatrix h = RowMatrix::Zero(B, H), a(B, 3 * H), rh(B, H);
    if (cache) {
      cache->x = x;
      cache->gates.reserve(T);
      cache->reset_hidden.reserve(T);
      cache->hidden.assign(1, h);
    }
    for (std::size_t s = 0; s < T; ++s) {
      const std::size_t t = time_index(s, T);
      a.noalias() = time_slice(x, t) * W;
      a.rowwise() += b;
      a.leftCols(2 * H).noalias() += h * U.leftCols(2 * H);
      a.leftCols(2 * H) = detail::sigmoid(a.leftCols(2 * H));
      rh = (a.leftCols(H).array() * h.array()).matrix();
      a.rightCols(H).noalias() += rh * U.rightCols(H);
      a.rightCols(H) = a.rightCols(H).array().tanh().matrix();
      const auto z = a.middleCols(H, H).array();
      h = ((1.0 - z) * a.rightCols(H).array() + z * h.array()).matrix();
      if (return_sequences_) time_slice(y, t) = h;
      if (cache) {
        cache->gates.push_back(a);
        cache->reset_hidden.push_back(rh);
        cache->hidden.push_back(h);
      }
    }
    if (!return_sequences_) as_matrix(y) = h;
    return y;
  }

  Parameter w_, u_, b_;
  std::optional<Cache> cache_;
};

enum class RecurrentKind { Lstm, Gru };

inline std::unique_ptr<RecurrentBase> make_recurrent(RecurrentKind kind, std::size_t in, std::size_t hidden,
                                                     bool return_sequences, bool reverse = false) {
  if (kind == RecurrentKind::Lstm) return std::make_unique<Lstm>(in, hidden, return_sequences, reverse);
  return std::make_unique<Gru>(in, hidden, return_sequences, reverse);
}

/// Forward and time-reversed recurrent passes, concatenated on the feature
/// axis as [forward, backward]. Without return_sequences the two final states
/// are concatenated.
class Bidirectional final : public Layer {
 public:
  Bidirectional(RecurrentKind kind, std::size_t in, std::size_t hidden, bool return_sequences = true)
      : kind_(kind),
        hidden_(hidden),
        fwd_(make_recurrent(kind, in, hidden, return_sequences, false)),
        bwd_(make_recurrent(kind, in, hidden, return_sequences, true)) {}

  Bidirectional(const Bidirectional& other)
      : Layer(other),
        kind_(other.kind_),
        hidden_(other.hidden_),
        fwd_(static_cast<RecurrentBase*>(other.fwd_->clone().release())),
        bwd_(static_cast<RecurrentBase*>(other.bwd_->clone().release())) {}

  std::string kind() const override { return kind_ == RecurrentKind::Lstm ? "BidirectionalLstm" : "BidirectionalGru"; }
  RecurrentBase& forward_layer() { return *fwd_; }
  RecurrentBase& backward_layer() { return *bwd_; }

  Shape output_shape(const Shape& input) const override {
    Shape out = fwd_->output_shape(input);
    out.back() *= 2;
    return out;
  }

  Tensor forward(const Tensor& x, Mode mode, Rng& rng) override {
    return concat(fwd_->forward(x, mode, rng), bwd_->forward(x, mode, rng));
  }
  Tensor infer(const Tensor& x) const override { return concat(fwd_->infer(x), bwd_->infer(x)); }

  Tensor backward(const Tensor& grad_out) override {
    Shape half = grad_out.shape();
    half.back() /= 2;
    Tensor gf(half), gb(half);
    const auto G = as_matrix(grad_out);
    as_matrix(gf) = G.leftCols(hidden_);
    as_matrix(gb) = G.rightCols(hidden_);
    Tensor dx = fwd_->backward(gf);
    const Tensor dxb = bwd_->backward(gb);
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += dxb[i];
    return dx;
  }

  std::vector<Parameter*> parameters() override {
    auto p = fwd_->parameters();
    for (auto* q : bwd_->parameters()) p.push_back(q);
    return p;
  }
  std::unique_ptr<Layer> clone() const override { return std::make_unique<Bidirectional>(*this); }

 private:
  Tensor concat(const Tensor& f, const Tensor& b) const {
    Shape s = f.shape();
    s.back() *= 2;
    Tensor y(s);
    auto Y = as_matrix(y);
    Y.leftCols(hidden_) = as_matrix(f);
    Y.rightCols(hidden_) = as_matrix(b);
    return y;
  }

  RecurrentKind kind_;
  std::size_t hidden_;
  std::unique_ptr<RecurrentBase> fwd_, bwd_;
};

/// 1-D convolution over time, zero "same" padding, relu.
class Conv1d final : public Layer {
 public:
  Conv1d(std::size_t in_channels, std::size_t channels, std::size_t kernel_size = 3)
      : in_(in_channels),
        out_(channels),
        k_(kernel_size),
        w_("conv.w", {kernel_size * in_channels, channels}, kernel_size * in_channels),
        b_("conv.b", {channels}, kernel_size * in_channels) {
    if (in_channels == 0 || channels == 0) throw std::invalid_argument("Conv1d: channels must be >= 1");
    if (kernel_size % 2 == 0) throw std::invalid_argument("Conv1d: kernel_size must be odd for same padding");
  }

  std::string kind() const override { return "Conv1d"; }

  Shape output_shape(const Shape& input) const override {
    if (input.size() != 3 || input[2] != in_ || input[1] == 0)
      shape_error("(batch, time, " + std::to_string(in_) + ")", input);
    return {input[0], input[1], out_};
  }

  Tensor forward(const Tensor& x, Mode, Rng&) override {
    Cache cache;
    Tensor y = compute(x, &cache);
    cache.output = y;
    cache_ = std::move(cache);
    return y;
  }
  Tensor infer(const Tensor& x) const override { return compute(x, nullptr); }

  Tensor backward(const Tensor& grad_out) override {
    if (!cache_) no_cache();
    const Cache& c = *cache_;
    const auto B = c.x.dim(0), T = c.x.dim(1);
    const ConstMatrixMap W(w_.value.data(), k_ * in_, out_);
    MatrixMap dW(w_.grad.data(), k_ * in_, out_);
    RowVectorMap db(b_.grad.data(), out_);
    Tensor dx(c.x.shape());
    RowMatrix dz(T, out_), dcol(T, k_ * in_);
    const std::size_t pad = k_ / 2;
    for (std::size_t b = 0; b < B; ++b) {
      dz = ConstMatrixMap(grad_out.data() + b * T * out_, T, out_);
      const ConstMatrixMap yb(c.output.data() + b * T * out_, T, out_);
      dz = (yb.array() > 0.0).select(dz.array(), 0.0).matrix();
      dW.noalias() += c.columns[b].transpose() * dz;
      db += dz.colwise().sum();
      dcol.noalias() = dz * W.transpose();
      MatrixMap dxb(dx.data() + b * T * in_, T, in_);
      for (std::size_t t = 0; t < T; ++t)
        for (std::size_t k = 0; k < k_; ++k) {
          const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t + k) - static_cast<std::ptrdiff_t>(pad);
          if (src < 0 || src >= static_cast<std::ptrdiff_t>(T)) continue;
          dxb.row(src) += dcol.block(t, k * in_, 1, in_);
        }
    }
    return dx;
  }

  std::vector<Parameter*> parameters() override { return {&w_, &b_}; }
  std::unique_ptr<Layer> clone() const override { return std::make_unique<Conv1d>(*this); }

 private:
  struct Cache {
    Tensor x;
    Tensor output;
    std::vector<RowMatrix> columns;  // im2col matrix per batch entry
  };

  Tensor compute(const Tensor& x, Cache* cache) const {
    Tensor y(output_shape(x.shape()));
    const auto B = x.dim(0), T = x.dim(1);
    const ConstMatrixMap W(w_.value.data(), k_ * in_, out_);
    const ConstRowVectorMap bias(b_.value.data(), out_);
    const std::size_t pad = k_ / 2;
    if (cache) {
      cache->x = x;
      cache->columns.reserve(B);
    }
    RowMatrix col(T, k_ * in_);
    for (std::size_t b = 0; b < B; ++b) {
      const ConstMatrixMap xb(x.data() + b * T * in_, T, in_);
      col.setZero();
      for (std::size_t t = 0; t < T; ++t)
        for (std::size_t k = 0; k < k_; ++k) {
          const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t + k) - static_cast<std::ptrdiff_t>(pad);
          if (src < 0 || src >= static_cast<std::ptrdiff_t>(T)) continue;
          col.block(t, k * in_, 1, in_) = xb.row(src);
        }
      MatrixMap yb(y.data() + b * T * out_, T, out_);
      yb.noalias() = col * W;
      yb.rowwise() += bias;
      if (cache) cache->columns.push_back(col);
    }
    detail::relu_inplace(y);
    return y;
  }

  std::size_t in_, out_, k_;
  Parameter w_, b_;
  std::optional<Cache> cache_;
};

/// Scaled dot-product attention over time with the last step as the query.
/// (batch, time, d) -> (batch, d) context vector.
class DotAttention final : public Layer {
 public:
  std::string kind() const override { return "DotAttention"; }

  Shape output_shape(const Shape& input) const override {
    if (input.size() != 3 || input[1] == 0 || input[2] == 0) shape_error("(batch, time, hidden)", input);
    return {input[0], input[2]};
  }

  Tensor forward(const Tensor& x, Mode, Rng&) override {
    Tensor weights;
    Tensor y = compute(x, &weights);
    cache_ = Cache{x, std::move(weights)};
    return y;
  }
  Tensor infer(const Tensor& x) const override { return compute(x, nullptr); }

  Tensor backward(const Tensor& grad_out) override {
    if (!cache_) no_cache();
    const Tensor& x = cache_->x;
    const auto B = x.dim(0), T = x.dim(1), D = x.dim(2);
    const double scale = 1.0 / std::sqrt(static_cast<double>(D));
    Tensor dx(x.shape());
    for (std::size_t b = 0; b < B; ++b) {
      const ConstMatrixMap hb(x.data() + b * T * D, T, D);
      MatrixMap dhb(dx.data() + b * T * D, T, D);
      const Eigen::Map<const Eigen::VectorXd> alpha(cache_->weights.data() + b * T, T);
      const ConstRowVectorMap dc(grad_out.data() + b * D, D);
      const Eigen::VectorXd dalpha = hb * dc.transpose();
      dhb.noalias() = alpha * dc;
      const Eigen::VectorXd ds = (alpha.array() * (dalpha.array() - alpha.dot(dalpha))).matrix();
      const Eigen::RowVectorXd q = hb.row(T - 1);
      dhb.noalias() += scale * ds * q;
      const Eigen::RowVectorXd dq = scale * (ds.transpose() * hb);
      dhb.row(T - 1) += dq;
    }
    return dx;
  }

  std::unique_ptr<Layer> clone() const override { return std::make_unique<DotAttention>(*this); }

 private:
  struct Cache {
    Tensor x;
    Tensor weights;  // (batch, time) attention weights
  };

  Tensor compute(const Tensor& x, Tensor* weights) const {
    Tensor y(output_shape(x.shape()));
    const auto B = x.dim(0), T = x.dim(1), D = x.dim(2);
    const double scale = 1.0 / std::sqrt(static_cast<double>(D));
    if (weights) *weights = Tensor({B, T});
    for (std::size_t b = 0; b < B; ++b) {
      const ConstMatrixMap hb(x.data() + b * T * D, T, D);
      Eigen::VectorXd s = scale * (hb * hb.row(T - 1).transpose());
      s.array() -= s.maxCoeff();
      s = s.array().exp().matrix();
      s /= s.sum();
      RowVectorMap(y.data() + b * D, D).noalias() = s.transpose() * hb;
      if (weights) Eigen::Map<Eigen::VectorXd>(weights->data() + b * T, T) = s;
    }
    return y;
  }

  std::optional<Cache> cache_;
};

/// Inverted dropout; the identity in Infer mode.
class Dropout final : public Layer {
 public:
  explicit Dropout(double rate) : rate_(rate) {
    if (!(rate >= 0.0 && rate < 1.0)) throw std::invalid_argument("Dropout: rate must be in [0, 1)");
  }

  std::string kind() const override { return "Dropout"; }
  double rate() const { return rate_; }

  Shape output_shape(const Shape& input) const override { return input; }

  Tensor forward(const Tensor& x, Mode mode, Rng& rng) override {
    Tensor mask(x.shape(), 1.0);
    if (mode == Mode::Train && rate_ > 0.0) {
      const double keep = 1.0 / (1.0 - rate_);
      for (auto& m : mask.values()) m = rng.uniform() < rate_ ? 0.0 : keep;
    }
    Tensor y = x;
    for (std::size_t i = 0; i < y.size(); ++i) y[i] *= mask[i];
    mask_ = std::move(mask);
    return y;
  }
  Tensor infer(const Tensor& x) const override { return x; }

  Tensor backward(const Tensor& grad_out) override {
    if (!mask_) no_cache();
    Tensor dx = grad_out;
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] *= (*mask_)[i];
    return dx;
  }

  std::unique_ptr<Layer> clone() const override { return std::make_unique<Dropout>(*this); }

 private:
  double rate_;
  std::optional<Tensor> mask_;
};

/// (batch, features) -> (batch, steps, features).
class RepeatVector final : public Layer {
 public:
  explicit RepeatVector(std::size_t steps) : steps_(steps) {
    if (steps == 0) throw std::invalid_argument("RepeatVector: steps must be >= 1");
  }

  std::string kind() const override { return "RepeatVector"; }

  Shape output_shape(const Shape& input) const override {
    if (input.size() != 2) shape_error("(batch, features)", input);
    return {input[0], steps_, input[1]};
  }

  Tensor forward(const Tensor& x, Mode, Rng&) override {
    input_shape_ = x.shape();
    return infer(x);
  }
  Tensor infer(const Tensor& x) const override {
    Tensor y(output_shape(x.shape()));
    for (std::size_t t = 0; t < steps_; ++t) time_slice(y, t) = as_matrix(x);
    return y;
  }

  Tensor backward(const Tensor& grad_out) override {
    if (!input_shape_) no_cache();
    Tensor dx(*input_shape_);
    auto dX = as_matrix(dx);
    for (std::size_t t = 0; t < steps_; ++t) dX += time_slice(grad_out, t);
    return dx;
  }

  std::unique_ptr<Layer> clone() const override { return std::make_unique<RepeatVector>(*this); }

 private:
  std::size_t steps_;
  std::optional<Shape> input_shape_;
};

/// Collapses every non-batch axis into one.
class Flatten final : public Layer {
 public:
  std::string kind() const override { return "Flatten"; }

  Shape output_shape(const Shape& input) const override {
    if (input.size() < 2) shape_error("(batch, ...)", input);
    return {input[0], element_count(input) / std::max<std::size_t>(input[0], 1)};
  }

  Tensor forward(const Tensor& x, Mode, Rng&) override {
    input_shape_ = x.shape();
    return infer(x);
  }
  Tensor infer(const Tensor& x) const override {
    Shape s = x.shape();
    if (s.size() < 2) shape_error("(batch, ...)", s);
    std::size_t rest = 1;
    for (std::size_t i = 1; i < s.size(); ++i) rest *= s[i];
    return x.reshaped({s[0], rest});
  }

  Tensor backward(const Tensor& grad_out) override {
    if (!input_shape_) no_cache();
    return grad_out.reshaped(*input_shape_);
  }

  std::unique_ptr<Layer> clone() const override { return std::make_unique<Flatten>(*this); }

 private:
  std::optional<Shape> input_shape_;
};

}  // namespace gwoens::nn
