#pragma once

// GWO calibration of one architecture: learning rate, hidden units,
// optimizer, dropout, window size and exogenous features are searched
// jointly, each candidate scored by the validation MSE of a full training run.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "gwoens/data.hpp"
#include "gwoens/forecasters.hpp"
#include "gwoens/gwo.hpp"
#include "gwoens/hash.hpp"
#include "gwoens/nn/train.hpp"

namespace gwoens::calib {

// Dimension order of the calibration search space.
enum Dim : std::size_t { kLearningRate = 0, kHiddenExponent, kOptimizer, kDropout, kWindow, kFeatures };

/// learning_rate Continuous(1e-4, 0.1, log10), hidden_exponent Integer(1, max),
/// optimizer Categorical(7), dropout Continuous(0.2, 0.5), window Integer(3, 30),
/// features Categorical(4). The two upper limits can be lowered for small budgets.
struct SpaceLimits {
  int max_hidden_exponent = 8;
  std::int64_t max_window = 30;
};

inline gwo::SearchSpace calibration_space(SpaceLimits limits = {}) {
  if (limits.max_hidden_exponent < 2 || limits.max_hidden_exponent > 8)
    throw std::invalid_argument("calibration_space: max_hidden_exponent must be in [2, 8]");
  if (limits.max_window < 4 || limits.max_window > 30)
    throw std::invalid_argument("calibration_space: max_window must be in [4, 30]");
  return gwo::SearchSpace({
      gwo::DimensionSpec::continuous("learning_rate", 1e-4, 0.1, true),
      gwo::DimensionSpec::integer("hidden_exponent", 1, limits.max_hidden_exponent),
      gwo::DimensionSpec::categorical("optimizer", nn::kAllOptimizers.size()),
      gwo::DimensionSpec::continuous("dropout", 0.2, 0.5),
      gwo::DimensionSpec::integer("window", 3, limits.max_window),
      gwo::DimensionSpec::categorical("features", 4),
  });
}

/// Maps a decoded point to hyperparameters. A pinned feature set overrides
/// the searched one.
inline forecast::HyperParams to_hyperparams(const gwo::DecodedSolution& s,
                                            std::optional<data::FeatureSet> pinned = std::nullopt) {
  forecast::HyperParams hp;
  hp.learning_rate = s.real(kLearningRate);
  hp.hidden_exponent = static_cast<int>(s.integer(kHiddenExponent));
  hp.optimizer = nn::optimizer_from_index(s.option(kOptimizer));
  hp.dropout = s.real(kDropout);
  hp.window = static_cast<std::size_t>(s.integer(kWindow));
  hp.features = pinned ? *pinned : data::feature_set_from_index(s.option(kFeatures));
  hp.validate();
  return hp;
}

inline gwo::DecodedSolution from_hyperparams(const forecast::HyperParams& hp) {
  return {{hp.learning_rate, static_cast<double>(hp.hidden_exponent), static_cast<double>(hp.optimizer),
           hp.dropout, static_cast<double>(hp.window), static_cast<double>(hp.features)}};
}

/// What gets calibrated: an architecture, optionally with its feature set fixed.
struct ModelKey {
  forecast::ArchitectureId arch = forecast::ArchitectureId::BiLstm;
  std::optional<data::FeatureSet> pinned_features;

  /// File-safe identifier, e.g. BI_GRU or SENT__BI_GRU.
  std::string id() const {
    std::string s = forecast::to_string(arch);
    return pinned_features ? std::string(data::to_string(*pinned_features)) + "__" + s : s;
  }

  bool operator==(const ModelKey&) const = default;
};

/// Accepts BI_GRU, Bi-GRU, SENT-Bi-GRU, SENT-USDX-encoder-decoder-LSTM,
/// SENT__BI_GRU and NONE-Bi-GRU style names.
inline ModelKey parse_model_key(std::string_view s) {
  ModelKey key;
  static const std::vector<std::pair<std::string, data::FeatureSet>> prefixes = {
      {"SENT-USDX-", data::FeatureSet::Both}, {"SENT-USD-", data::FeatureSet::Both},
      {"BOTH__", data::FeatureSet::Both},     {"USDX-", data::FeatureSet::Usdx},
      {"USDX__", data::FeatureSet::Usdx},     {"SENT-", data::FeatureSet::Sent},
      {"SENT__", data::FeatureSet::Sent},     {"NONE-", data::FeatureSet::None},
      {"NONE__", data::FeatureSet::None}};
  for (const auto& [prefix, fs] : prefixes) {
    if (s.substr(0, prefix.size()) == prefix) {
      key.pinned_features = fs;
      s.remove_prefix(prefix.size());
      break;
    }
  }
  key.arch = forecast::parse_architecture(s);
  return key;
}

/// Everything a candidate evaluation needs besides the candidate itself.
struct ObjectiveContext {
  const data::AlignedFrame* frame = nullptr;  // normalized
  data::SplitPlan plan;
  nn::TrainConfig train;
};

/// Builds windows for the candidate, trains on the train slice and returns
/// the best validation MSE. Test targets are never read. Divergence scores
/// +infinity.
inline double calibration_objective(const ModelKey& key, const gwo::DecodedSolution& decoded,
                                    const ObjectiveContext& ctx, std::uint64_t eval_seed) {
  const forecast::HyperParams hp = to_hyperparams(decoded, key.pinned_features);
  const auto ds = data::make_windows(*ctx.frame, hp.features, hp.window);
  const auto parts = data::apply_plan(ds, ctx.plan);
  forecast::Model model(key.arch, hp);
  nn::TrainConfig config = ctx.train;
  config.seed = eval_seed;
  try {
    return forecast::fit(model, parts.train, parts.validation, config).best_validation_mse;
  } catch (const nn::DivergedError&) {
    return std::numeric_limits<double>::infinity();
  }
}

class CalibrationFailed : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RunRecord {
  std::uint64_t gwo_seed = 0;
  std::uint64_t eval_seed = 0;
  double best_fitness = std::numeric_limits<double>::infinity();
  forecast::HyperParams best_hp;
  gwo::Trace trace;
};

struct CalibrationResult {
  ModelKey key;
  forecast::HyperParams best_hp;
  double best_validation_mse = std::numeric_limits<double>::infinity();
  std::size_t best_run = 0;
  std::vector<RunRecord> runs;

  std::string label() const { return forecast::model_label(key.arch, best_hp.features); }
  std::uint64_t best_eval_seed() const { return runs.at(best_run).eval_seed; }
};

inline std::uint64_t run_seed(std::uint64_t master_seed, const ModelKey& key, std::size_t run) {
  return derive_seed(derive_seed(master_seed, fnv1a(key.id())), run);
}

/// Runs `runs` independent GWO searches and keeps the best configuration.
/// Within a run every candidate trains from the same eval seed.
inline CalibrationResult calibrate(const ModelKey& key, const ObjectiveContext& ctx, gwo::GwoConfig gwo_config,
                                   std::size_t runs, std::uint64_t master_seed, SpaceLimits limits = {}) {
  if (runs < 1) throw std::invalid_argument("calibrate: runs must be >= 1");
  if (ctx.frame == nullptr) throw std::invalid_argument("calibrate: no frame");
  const auto space = calibration_space(limits);

  CalibrationResult result;
  result.key = key;
  for (std::size_t r = 0; r < runs; ++r) {
    RunRecord rec;
    const std::uint64_t seed = run_seed(master_seed, key, r);
    rec.gwo_seed = derive_seed(seed, 1);
    rec.eval_seed = derive_seed(seed, 2);
    gwo_config.seed = rec.gwo_seed;
    const auto found = gwo::optimize(
        [&](const gwo::DecodedSolution& s) { return calibration_objective(key, s, ctx, rec.eval_seed); }, space,
        gwo_config);
    rec.best_fitness = found.fitness;
    rec.best_hp = to_hyperparams(found.solution, key.pinned_features);
    rec.trace = found.trace;
    if (found.fitness < result.best_validation_mse) {
      result.best_validation_mse = found.fitness;
      result.best_hp = rec.best_hp;
      result.best_run = r;
    }
    result.runs.push_back(std::move(rec));
  }
  if (!std::isfinite(result.best_validation_mse))
    throw CalibrationFailed("calibration of " + key.id() + " failed: every run scored +infinity");
  return result;
}

}  // namespace gwoens::calib
