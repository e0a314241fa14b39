#pragma once

// The five recurrent forecasting architectures behind one build / fit /
// predict surface. Every model maps (batch, window, features) to
// (batch, horizon) in normalized units.

#include <array>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "gwoens/data.hpp"
#include "gwoens/nn/layers.hpp"
#include "gwoens/nn/network.hpp"
#include "gwoens/nn/optimizers.hpp"
#include "gwoens/nn/train.hpp"

namespace gwoens::forecast {

enum class ArchitectureId { BiLstm, BiGru, CnnBiLstm, CnnBiLstmAtt, EncDecBiLstm };

inline constexpr std::array<ArchitectureId, 5> kAllArchitectures = {
    ArchitectureId::BiLstm, ArchitectureId::BiGru, ArchitectureId::CnnBiLstm, ArchitectureId::CnnBiLstmAtt,
    ArchitectureId::EncDecBiLstm};

/// Identifier form, e.g. BI_GRU.
inline const char* to_string(ArchitectureId arch) {
  switch (arch) {
    case ArchitectureId::BiLstm: return "BI_LSTM";
    case ArchitectureId::BiGru: return "BI_GRU";
    case ArchitectureId::CnnBiLstm: return "CNN_BI_LSTM";
    case ArchitectureId::CnnBiLstmAtt: return "CNN_BI_LSTM_ATT";
    case ArchitectureId::EncDecBiLstm: return "ENCDEC_BI_LSTM";
  }
  throw std::invalid_argument("unknown architecture");
}

/// Report form, e.g. Bi-GRU.
inline const char* display_name(ArchitectureId arch) {
  switch (arch) {
    case ArchitectureId::BiLstm: return "Bi-LSTM";
    case ArchitectureId::BiGru: return "Bi-GRU";
    case ArchitectureId::CnnBiLstm: return "CNN-Bi-LSTM";
    case ArchitectureId::CnnBiLstmAtt: return "CNN-Bi-LSTM-att";
    case ArchitectureId::EncDecBiLstm: return "encoder-decoder-LSTM";
  }
  throw std::invalid_argument("unknown architecture");
}

inline ArchitectureId parse_architecture(std::string_view s) {
  for (auto a : kAllArchitectures)
    if (s == to_string(a) || s == display_name(a)) return a;
  throw std::invalid_argument("unknown architecture '" + std::string(s) + "'");
}

inline const char* feature_prefix(data::FeatureSet f) {
  switch (f) {
    case data::FeatureSet::None: return "";
    case data::FeatureSet::Usdx: return "USDX-";
    case data::FeatureSet::Sent: return "SENT-";
    case data::FeatureSet::Both: return "SENT-USDX-";
  }
  return "";
}

/// Feature prefix plus architecture, e.g. SENT-Bi-GRU or SENT-USDX-encoder-decoder-LSTM.
inline std::string model_label(ArchitectureId arch, data::FeatureSet f) {
  return std::string(feature_prefix(f)) + display_name(arch);
}

struct HyperParams {
  double learning_rate = 0.001;
  int hidden_exponent = 3;  // hidden units = 2^hidden_exponent
  nn::OptimizerKind optimizer = nn::OptimizerKind::Adam;
  double dropout = 0.2;
  std::size_t window = 5;
  data::FeatureSet features = data::FeatureSet::None;

  std::size_t hidden_units() const { return std::size_t{1} << hidden_exponent; }

  void validate() const {
    if (!(learning_rate >= 1e-4 && learning_rate <= 0.1))
      throw std::invalid_argument("hyperparams: learning_rate outside [0.0001, 0.1]");
    if (hidden_exponent < 1 || hidden_exponent > 8)
      throw std::invalid_argument("hyperparams: hidden_exponent outside [1, 8]");
    if (!(dropout >= 0.2 && dropout <= 0.5)) throw std::invalid_argument("hyperparams: dropout outside [0.2, 0.5]");
    if (window < 3 || window > 30) throw std::invalid_argument("hyperparams: window outside [3, 30]");
  }

  bool operator==(const HyperParams&) const = default;
};

/// Builds the network for one architecture. Dropout follows every recurrent
/// and convolutional block; unit counts are all hp.hidden_units().
inline nn::Network build(ArchitectureId arch, const HyperParams& hp, std::size_t feature_count) {
  hp.validate();
  if (feature_count == 0) throw std::invalid_argument("build: feature_count must be >= 1");
  using namespace nn;
  const std::size_t h = hp.hidden_units();
  const std::size_t H = data::kHorizon;
  Network net({hp.window, feature_count});
  switch (arch) {
    case ArchitectureId::BiLstm:
    case ArchitectureId::BiGru: {
      const auto kind = arch == ArchitectureId::BiLstm ? RecurrentKind::Lstm : RecurrentKind::Gru;
      net.add<Bidirectional>(kind, feature_count, h, false);
      net.add<Dropout>(hp.dropout);
      net.add<Dense>(2 * h, h, Activation::Relu);
      net.add<Dense>(h, h, Activation::Relu);
      net.add<Dense>(h, H, Activation::Linear);
      break;
    }
    case ArchitectureId::CnnBiLstm:
    case ArchitectureId::CnnBiLstmAtt: {
      const bool attention = arch == ArchitectureId::CnnBiLstmAtt;
      net.add<Conv1d>(feature_count, h, 3);
      net.add<Dropout>(hp.dropout);
      net.add<Conv1d>(h, h, 3);
      net.add<Dropout>(hp.dropout);
      net.add<Bidirectional>(RecurrentKind::Lstm, h, h, true);
      net.add<Dropout>(hp.dropout);
      net.add<Bidirectional>(RecurrentKind::Lstm, 2 * h, h, attention);
      net.add<Dropout>(hp.dropout);
      if (attention) net.add<DotAttention>();
      net.add<Dense>(2 * h, H, Activation::Linear);
      break;
    }
    case ArchitectureId::EncDecBiLstm: {
      net.add<Bidirectional>(RecurrentKind::Lstm, feature_count, h, true);
      net.add<Dropout>(hp.dropout);
      net.add<Bidirectional>(RecurrentKind::Lstm, 2 * h, h, false);
      net.add<Dropout>(hp.dropout);
      net.add<RepeatVector>(H);
      net.add<Lstm>(2 * h, h, true);
      net.add<Dropout>(hp.dropout);
      net.add<Dense>(h, 1, Activation::Linear);
      net.add<Flatten>();
      break;
    }
    default:
      throw std::invalid_argument("build: unknown architecture");
  }
  return net;
}

struct Model {
  ArchitectureId arch;
  HyperParams hp;
  nn::Network network;

  Model(ArchitectureId a, const HyperParams& p)
      : arch(a), hp(p), network(build(a, p, data::feature_count(p.features))) {}

  std::string label() const { return model_label(arch, hp.features); }
};

inline nn::OptimizerSpec optimizer_spec(const HyperParams& hp) {
  nn::OptimizerSpec spec;
  spec.kind = hp.optimizer;
  spec.learning_rate = hp.learning_rate;
  return spec;
}

namespace detail {
inline void check_dataset(const Model& m, const data::WindowedDataset& ds) {
  if (ds.window != m.hp.window || ds.features != m.hp.features)
    throw std::invalid_argument("fit: dataset window/features do not match the model (" + std::to_string(ds.window) +
                                "/" + data::to_string(ds.features) + " vs " + std::to_string(m.hp.window) + "/" +
                                data::to_string(m.hp.features) + ")");
}
}  // namespace detail

/// Trains on `train` with early stopping on `validation`.
inline nn::TrainReport fit(Model& model, const data::WindowedDataset& train, const data::WindowedDataset& validation,
                           const nn::TrainConfig& config) {
  detail::check_dataset(model, train);
  detail::check_dataset(model, validation);
  return nn::train(model.network, train.X, train.Y, validation.X, validation.Y, config, optimizer_spec(model.hp));
}

/// Trains on `train`, holding out its last config.validation_fraction for early stopping.
inline nn::TrainReport fit(Model& model, const data::WindowedDataset& train, const nn::TrainConfig& config) {
  detail::check_dataset(model, train);
  return nn::train(model.network, train.X, train.Y, config, optimizer_spec(model.hp));
}

/// One model's forecasts, (N, horizon) in normalized units.
struct ForecastMatrix {
  nn::Tensor values;
  std::string model_label;
  std::vector<std::size_t> target_rows;

  std::size_t rows() const { return values.rank() ? values.dim(0) : 0; }
};

inline ForecastMatrix predict(const Model& model, const nn::Tensor& X) {
  return {model.network.predict(X), model.label(), {}};
}

inline ForecastMatrix predict(const Model& model, const data::WindowedDataset& ds) {
  detail::check_dataset(model, ds);
  ForecastMatrix out = predict(model, ds.X);
  out.target_rows = ds.target_rows;
  return out;
}

}  // namespace gwoens::forecast
