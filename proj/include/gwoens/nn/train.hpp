#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "gwoens/nn/network.hpp"
#include "gwoens/nn/optimizers.hpp"
#include "gwoens/rng.hpp"

namespace gwoens::nn {

struct TrainConfig {
  std::size_t batch_size = 16;
  std::size_t max_epochs = 100;
  std::size_t patience = 10;
  std::uint64_t seed = 0;
  double validation_fraction = 0.1;

  void validate() const {
    if (batch_size == 0) throw std::invalid_argument("train: batch_size must be >= 1");
    if (max_epochs == 0) throw std::invalid_argument("train: max_epochs must be >= 1");
    if (patience == 0 || patience >= max_epochs)
      throw std::invalid_argument("train: need 1 <= patience < max_epochs");
    if (!(validation_fraction > 0.0 && validation_fraction < 0.5))
      throw std::invalid_argument("train: validation_fraction must be in (0, 0.5)");
  }
};

struct TrainReport {
  std::size_t epochs_run = 0;
  std::size_t best_epoch = 0;  // 1-based
  double best_validation_mse = std::numeric_limits<double>::infinity();
  std::vector<double> train_loss_curve;
  std::vector<double> validation_curve;

  bool operator==(const TrainReport&) const = default;
};

/// Every mini-batch of an epoch produced a non-finite loss.
class DivergedError : public std::runtime_error {
 public:
  explicit DivergedError(std::size_t epoch)
      : std::runtime_error("training diverged at epoch " + std::to_string(epoch)), epoch_(epoch) {}
  std::size_t epoch() const { return epoch_; }

 private:
  std::size_t epoch_;
};

/// Patience-based stopping rule on a validation curve.
class EarlyStopping {
 public:
  explicit EarlyStopping(std::size_t patience) : patience_(patience) {}

  /// Records the score of the next epoch; returns true when training should stop.
  bool update(double validation_mse) {
    ++epoch_;
    if (validation_mse < best_) {
      best_ = validation_mse;
      best_epoch_ = epoch_;
      stale_ = 0;
      return false;
    }
    return ++stale_ >= patience_;
  }

  bool improved_last() const { return best_epoch_ == epoch_; }
  double best() const { return best_; }
  std::size_t best_epoch() const { return best_epoch_; }

 private:
  std::size_t patience_;
  std::size_t epoch_ = 0;
  std::size_t best_epoch_ = 0;
  std::size_t stale_ = 0;
  double best_ = std::numeric_limits<double>::infinity();
};

/// Rows [begin, end) along the first axis.
inline Tensor slice_rows(const Tensor& t, std::size_t begin, std::size_t end) {
  if (begin > end || end > t.dim(0)) throw std::out_of_range("slice_rows: range out of bounds");
  Shape s = t.shape();
  const std::size_t row = t.dim(0) ? t.size() / t.dim(0) : 0;
  s[0] = end - begin;
  return Tensor(s, std::vector<double>(t.data() + begin * row, t.data() + end * row));
}

inline Tensor gather_rows(const Tensor& t, std::span<const std::size_t> rows) {
  Shape s = t.shape();
  const std::size_t row = t.dim(0) ? t.size() / t.dim(0) : 0;
  s[0] = rows.size();
  Tensor out(s);
  for (std::size_t i = 0; i < rows.size(); ++i)
    std::copy_n(t.data() + rows[i] * row, row, out.data() + i * row);
  return out;
}

inline double validation_mse(const Network& net, const Tensor& x, const Tensor& y) {
  const double v = mse_loss(net.predict(x), y).value;
  return std::isfinite(v) ? v : std::numeric_limits<double>::infinity();
}

/// Mini-batch training with early stopping on an explicit validation set.
/// The network is initialized from config.seed and left holding the
/// parameters of its best validation epoch.
inline TrainReport train(Network& net, const Tensor& x_train, const Tensor& y_train, const Tensor& x_val,
                         const Tensor& y_val, const TrainConfig& config, const OptimizerSpec& opt_spec) {
  config.validate();
  if (x_train.rank() == 0 || x_train.dim(0) == 0) throw std::invalid_argument("train: empty training set");
  if (x_train.dim(0) != y_train.dim(0)) throw std::invalid_argument("train: X/Y sample count mismatch");
  if (x_val.rank() == 0 || x_val.dim(0) == 0) throw std::invalid_argument("train: empty validation set");

  net.initialize(derive_seed(config.seed, 0));
  Rng order_rng(derive_seed(config.seed, 1));
  Rng dropout_rng(derive_seed(config.seed, 2));
  Optimizer optimizer(opt_spec);
  auto params = net.parameters();

  const std::size_t n = x_train.dim(0);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});

  TrainReport report;
  EarlyStopping stopper(config.patience);
  std::vector<Tensor> best = net.snapshot();

  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    order_rng.shuffle(std::span<std::size_t>(order));
    double loss_sum = 0.0;
    std::size_t counted = 0;
    for (std::size_t start = 0; start < n; start += config.batch_size) {
      const std::size_t end = std::min(n, start + config.batch_size);
      const std::span<const std::size_t> idx(order.data() + start, end - start);
      const Tensor xb = gather_rows(x_train, idx);
      const Tensor yb = gather_rows(y_train, idx);
      net.zero_grad();
      const Tensor pred = net.forward(xb, Mode::Train, dropout_rng);
      const Loss loss = mse_loss(pred, yb);
      if (!std::isfinite(loss.value)) continue;
      net.backward(loss.gradient);
      optimizer.step(params);
      loss_sum += loss.value * static_cast<double>(idx.size());
      counted += idx.size();
    }
    if (counted == 0) throw DivergedError(epoch);
    report.train_loss_curve.push_back(loss_sum / static_cast<double>(counted));

    const double val = validation_mse(net, x_val, y_val);
    report.validation_curve.push_back(val);
    report.epochs_run = epoch;
    const bool stop = stopper.update(val);
    if (stopper.improved_last()) best = net.snapshot();
    if (stop) break;
  }

  net.restore(best);
  report.best_epoch = stopper.best_epoch();
  report.best_validation_mse = stopper.best();
  return report;
}

/// Holds out the chronologically last validation_fraction of the samples for
/// early stopping and trains on the rest.
inline TrainReport train(Network& net, const Tensor& x, const Tensor& y, const TrainConfig& config,
                         const OptimizerSpec& opt_spec) {
  config.validate();
  const std::size_t n = x.rank() ? x.dim(0) : 0;
  if (n < 2) throw std::invalid_argument("train: need at least two samples");
  const auto n_val = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::llround(config.validation_fraction * static_cast<double>(n))));
  const std::size_t n_fit = n - n_val;
  return train(net, slice_rows(x, 0, n_fit), slice_rows(y, 0, n_fit), slice_rows(x, n_fit, n),
               slice_rows(y, n_fit, n), config, opt_spec);
}

}  // namespace gwoens::nn
