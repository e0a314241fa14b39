#pragma once

// Staged batch pipeline: ingest -> calibrate -> train -> blend -> evaluate -> report.
// Every stage writes its artifacts under the output directory, stamped with
// the config hash and master seed; downstream stages refuse missing or stale
// inputs.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <unistd.h>

#include <nlohmann/json.hpp>

#include "gwoens/calibration.hpp"
#include "gwoens/data.hpp"
#include "gwoens/ensemble.hpp"
#include "gwoens/forecasters.hpp"
#include "gwoens/gwo_io.hpp"
#include "gwoens/hash.hpp"
#include "gwoens/metrics.hpp"
#include "gwoens/nn/network.hpp"

namespace gwoens::pipeline {

namespace fs = std::filesystem;
using json = nlohmann::json;

/// Error with a machine-readable code: config, data, missing_stage,
/// stale_artifact, locked, calibration_failed.
class PipelineError : public std::runtime_error {
 public:
  PipelineError(std::string code, const std::string& message, std::string stage = {})
      : std::runtime_error(message), code_(std::move(code)), stage_(std::move(stage)) {}
  const std::string& code() const { return code_; }
  const std::string& stage() const { return stage_; }

 private:
  std::string code_;
  std::string stage_;
};

struct GwoSettings {
  std::size_t pop_size = 10;
  std::size_t iterations = 30;
  std::size_t runs = 5;
  std::size_t threads = 1;
};

struct EnsembleSettings {
  std::vector<std::string> members;  // empty: every configured model
  std::size_t pop_size = 20;
  std::size_t iterations = 100;
};

struct RunConfig {
  fs::path brent, usdx, sent;
  std::string date_column = "date";
  std::string value_column = "value";
  std::uint64_t master_seed = 42;
  double test_fraction = 0.2;
  double validation_fraction = 0.1;
  GwoSettings gwo;
  nn::TrainConfig train;
  calib::SpaceLimits limits;
  metrics::MspeVariant mspe = metrics::MspeVariant::Percentage;
  std::vector<std::string> models = {"SENT-Bi-GRU", "SENT-Bi-LSTM", "SENT-CNN-Bi-LSTM-att",
                                     "SENT-encoder-decoder-LSTM", "SENT-USDX-encoder-decoder-LSTM"};
  EnsembleSettings ensemble;
  fs::path out = "run";

  std::vector<calib::ModelKey> model_keys() const {
    std::vector<calib::ModelKey> keys;
    for (const auto& m : models) {
      auto k = calib::parse_model_key(m);
      if (std::find(keys.begin(), keys.end(), k) == keys.end()) keys.push_back(k);
    }
    return keys;
  }

  std::vector<calib::ModelKey> member_keys() const {
    if (ensemble.members.empty()) return model_keys();
    std::vector<calib::ModelKey> keys;
    for (const auto& m : ensemble.members) keys.push_back(calib::parse_model_key(m));
    return keys;
  }
};

namespace detail {

inline void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw PipelineError("config", where + " must be a JSON object");
  for (const auto& [k, v] : j.items())
    if (!allowed.count(k)) throw PipelineError("config", "unknown key '" + k + "' in " + where);
}

inline std::string mspe_name(metrics::MspeVariant v) {
  return v == metrics::MspeVariant::Percentage ? "percentage" : "printed";
}

}  // namespace detail

/// Relative data paths resolve against `base_dir`.
inline RunConfig config_from_json(const json& j, const fs::path& base_dir = {}) {
  using detail::check_keys;
  RunConfig c;
  try {
    check_keys(j, {"data", "master_seed", "split", "gwo", "train", "search", "metrics", "models", "ensemble", "out"},
               "config");
    const json& d = j.at("data");
    check_keys(d, {"brent", "usdx", "sent", "date_column", "value_column"}, "data");
    auto resolve = [&](const std::string& p) {
      fs::path path(p);
      return path.is_absolute() || base_dir.empty() ? path : base_dir / path;
    };
    c.brent = resolve(d.at("brent").get<std::string>());
    c.usdx = resolve(d.at("usdx").get<std::string>());
    c.sent = resolve(d.at("sent").get<std::string>());
    c.date_column = d.value("date_column", c.date_column);
    c.value_column = d.value("value_column", c.value_column);
    c.master_seed = j.value("master_seed", c.master_seed);
    if (j.contains("split")) {
      check_keys(j["split"], {"test_fraction", "validation_fraction"}, "split");
      c.test_fraction = j["split"].value("test_fraction", c.test_fraction);
      c.validation_fraction = j["split"].value("validation_fraction", c.validation_fraction);
    }
    if (j.contains("gwo")) {
      const json& g = j["gwo"];
      check_keys(g, {"pop_size", "iterations", "runs", "threads"}, "gwo");
      c.gwo.pop_size = g.value("pop_size", c.gwo.pop_size);
      c.gwo.iterations = g.value("iterations", c.gwo.iterations);
      c.gwo.runs = g.value("runs", c.gwo.runs);
      c.gwo.threads = g.value("threads", c.gwo.threads);
    }
    if (j.contains("train")) {
      const json& t = j["train"];
      check_keys(t, {"batch_size", "max_epochs", "patience"}, "train");
      c.train.batch_size = t.value("batch_size", c.train.batch_size);
      c.train.max_epochs = t.value("max_epochs", c.train.max_epochs);
      c.train.patience = t.value("patience", c.train.patience);
    }
    if (j.contains("search")) {
      check_keys(j["search"], {"max_hidden_exponent", "max_window"}, "search");
      c.limits.max_hidden_exponent = j["search"].value("max_hidden_exponent", c.limits.max_hidden_exponent);
      c.limits.max_window = j["search"].value("max_window", c.limits.max_window);
    }
    if (j.contains("metrics")) {
      check_keys(j["metrics"], {"mspe"}, "metrics");
      const auto v = j["metrics"].value("mspe", std::string("percentage"));
      if (v == "percentage") c.mspe = metrics::MspeVariant::Percentage;
      else if (v == "printed") c.mspe = metrics::MspeVariant::Printed;
      else throw PipelineError("config", "metrics.mspe must be 'percentage' or 'printed'");
    }
    if (j.contains("models")) c.models = j["models"].get<std::vector<std::string>>();
    if (j.contains("ensemble")) {
      const json& e = j["ensemble"];
      check_keys(e, {"members", "pop_size", "iterations"}, "ensemble");
      c.ensemble.members = e.value("members", c.ensemble.members);
      c.ensemble.pop_size = e.value("pop_size", c.ensemble.pop_size);
      c.ensemble.iterations = e.value("iterations", c.ensemble.iterations);
    }
    if (j.contains("out")) c.out = resolve(j["out"].get<std::string>());
  } catch (const json::exception& e) {
    throw PipelineError("config", std::string("invalid config: ") + e.what());
  }
  return c;
}

/// Config written next to a synthetic dataset: the five architectures with
/// searched features on a budget that fits one CPU core.
inline json synthetic_config_json() {
  return {{"data", {{"brent", "brent.csv"}, {"usdx", "usdx.csv"}, {"sent", "sent.csv"}}},
          {"master_seed", 42},
          {"split", {{"test_fraction", 0.2}, {"validation_fraction", 0.1}}},
          {"gwo", {{"pop_size", 6}, {"iterations", 10}, {"runs", 2}, {"threads", 1}}},
          {"train", {{"batch_size", 16}, {"max_epochs", 20}, {"patience", 4}}},
          {"search", {{"max_hidden_exponent", 4}, {"max_window", 30}}},
          {"models", {"BI_LSTM", "BI_GRU", "CNN_BI_LSTM", "CNN_BI_LSTM_ATT", "ENCDEC_BI_LSTM"}},
          {"ensemble", {{"members", json::array()}, {"pop_size", 20}, {"iterations", 100}}},
          {"out", "run"}};
}

inline RunConfig load_config(const fs::path& path) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw PipelineError("config", "cannot parse " + path.string() + ": " + e.what());
  } catch (const std::runtime_error& e) {
    throw PipelineError("config", e.what());
  }
  return config_from_json(j, path.parent_path());
}

inline void validate(const RunConfig& c) {
  auto fail = [](const std::string& m) { throw PipelineError("config", m); };
  for (const auto* p : {&c.brent, &c.usdx, &c.sent})
    if (!fs::is_regular_file(*p)) fail("data file not found: " + p->string());
  if (!(c.test_fraction > 0.0 && c.test_fraction < 0.5)) fail("split.test_fraction must be in (0, 0.5)");
  if (!(c.validation_fraction > 0.0 && c.validation_fraction < 0.5))
    fail("split.validation_fraction must be in (0, 0.5)");
  if (c.gwo.pop_size < 4) fail("gwo.pop_size must be >= 4");
  if (c.gwo.iterations < 1) fail("gwo.iterations must be >= 1");
  if (c.gwo.runs < 1) fail("gwo.runs must be >= 1");
  if (c.gwo.threads < 1) fail("gwo.threads must be >= 1");
  if (c.ensemble.pop_size < 4 || c.ensemble.iterations < 1)
    fail("ensemble.pop_size must be >= 4 and ensemble.iterations >= 1");
  if (c.models.empty()) fail("models must not be empty");
  try {
    c.train.validate();
    calib::calibration_space(c.limits);
    c.model_keys();
    c.member_keys();
  } catch (const std::invalid_argument& e) {
    fail(e.what());
  }
}

/// Settings that change results, plus the content hash of every input. The
/// model selection and the output directory are not part of it.
inline json hashed_settings(const RunConfig& c) {
  return {{"inputs",
           {{"brent", file_hash(c.brent)},
            {"usdx", file_hash(c.usdx)},
            {"sent", file_hash(c.sent)},
            {"date_column", c.date_column},
            {"value_column", c.value_column}}},
          {"master_seed", c.master_seed},
          {"split", {{"test_fraction", c.test_fraction}, {"validation_fraction", c.validation_fraction}}},
          {"gwo", {{"pop_size", c.gwo.pop_size}, {"iterations", c.gwo.iterations}, {"runs", c.gwo.runs}}},
          {"train",
           {{"batch_size", c.train.batch_size}, {"max_epochs", c.train.max_epochs}, {"patience", c.train.patience}}},
          {"search", {{"max_hidden_exponent", c.limits.max_hidden_exponent}, {"max_window", c.limits.max_window}}},
          {"metrics", {{"mspe", detail::mspe_name(c.mspe)}}},
          {"ensemble", {{"pop_size", c.ensemble.pop_size}, {"iterations", c.ensemble.iterations}}}};
}

inline std::string config_hash(const RunConfig& c) { return to_hex(fnv1a(hashed_settings(c).dump())); }

/// Exclusive use of an output directory for the lifetime of the object.
class OutputLock {
 public:
  explicit OutputLock(const fs::path& dir) : path_(dir / ".lock") {
    fs::create_directories(dir);
    std::FILE* f = std::fopen(path_.c_str(), "wx");
    if (!f)
      throw PipelineError("locked", "output directory " + dir.string() + " is locked by another process (" +
                                        path_.string() + ")");
    std::fprintf(f, "%ld\n", static_cast<long>(::getpid()));
    std::fclose(f);
  }
  ~OutputLock() {
    std::error_code ec;
    fs::remove(path_, ec);
  }
  OutputLock(const OutputLock&) = delete;
  OutputLock& operator=(const OutputLock&) = delete;

 private:
  fs::path path_;
};

// ---------------------------------------------------------------------------
// File helpers

inline std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// Writes through a temporary file; leaves the target untouched when the
/// content is already identical.
inline bool write_text(const fs::path& path, const std::string& text) {
  if (fs::exists(path)) {
    std::error_code ec;
    if (fs::file_size(path, ec) == text.size() && read_file(path) == text) return false;
  }
  fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << text;
  }
  fs::rename(tmp, path);
  return true;
}

inline bool write_json(const fs::path& path, const json& j) { return write_text(path, j.dump(2) + "\n"); }

inline json read_json(const fs::path& path) { return json::parse(read_file(path)); }

inline std::string csv_stamp(const std::string& hash, std::uint64_t seed) {
  return "# config_hash=" + hash + ",master_seed=" + std::to_string(seed) + "\n";
}

// ---------------------------------------------------------------------------
// Layout

struct Layout {
  fs::path root;

  fs::path manifest() const { return root / "manifest.json"; }
  fs::path calibration(const calib::ModelKey& k) const { return root / "calibration" / (k.id() + ".json"); }
  fs::path trace(const calib::ModelKey& k, std::size_t run) const {
    return root / "calibration" / (k.id() + ".run" + std::to_string(run) + ".trace.csv");
  }
  fs::path model(const calib::ModelKey& k) const { return root / "models" / (k.id() + ".json"); }
  fs::path forecast(const std::string& id, const std::string& split) const {
    return root / "forecasts" / (id + "." + split + ".csv");
  }
  fs::path weights() const { return root / "ensemble" / "weights.json"; }
  fs::path metrics(bool price_units) const { return root / (price_units ? "metrics_price.csv" : "metrics.csv"); }
  fs::path report_dir() const { return root / "report"; }
};

inline constexpr const char* kEnsembleId = "ENSEMBLE";

/// Loads an upstream artifact, checking that it exists and belongs to this config.
inline json require_artifact(const fs::path& path, const std::string& stage, const std::string& hash) {
  if (!fs::exists(path))
    throw PipelineError("missing_stage", "stage '" + stage + "' has not been run: missing " + path.string(), stage);
  json j = read_json(path);
  const std::string found = j.value("config_hash", "");
  if (found != hash)
    throw PipelineError("stale_artifact",
                        path.string() + " was produced with config hash " + found + ", current config hash is " +
                            hash + "; rerun stage '" + stage + "'",
                        stage);
  return j;
}

// ---------------------------------------------------------------------------
// Prepared data

struct Workspace {
  RunConfig config;
  std::string hash;
  Layout layout;
  data::AlignedFrame raw;    // USD / index units
  data::AlignedFrame frame;  // normalized
  data::SplitPlan plan;
  data::Normalizer normalizer;
  std::array<data::RawSeries, 3> series;

  std::string date_of(std::size_t row) const { return data::format_date(raw.dates.at(row)); }
};

inline Workspace prepare(const RunConfig& config) {
  validate(config);
  Workspace ws;
  ws.config = config;
  ws.hash = config_hash(config);
  ws.layout = Layout{config.out};
  try {
    ws.series[0] = data::load_csv(config.brent, config.date_column, config.value_column);
    ws.series[1] = data::load_csv(config.usdx, config.date_column, config.value_column);
    ws.series[2] = data::load_csv(config.sent, config.date_column, config.value_column);
    ws.series[0].name = "BRENT";
    ws.series[1].name = "USDX";
    ws.series[2].name = "SENT";
    ws.raw = data::align(ws.series[0], ws.series[1], ws.series[2]);
    ws.plan = data::plan_splits(ws.raw.size(), config.test_fraction, config.validation_fraction,
                                static_cast<std::size_t>(config.limits.max_window));
    ws.normalizer = data::Normalizer::fit(ws.raw, ws.plan.normalizer_rows());
  } catch (const data::DataError& e) {
    throw PipelineError("data", e.what());
  }
  ws.frame = ws.normalizer.apply(ws.raw);
  return ws;
}

inline nn::TrainConfig train_config(const RunConfig& c) {
  nn::TrainConfig t = c.train;
  t.validation_fraction = c.validation_fraction;
  return t;
}

inline json hp_to_json(const forecast::HyperParams& hp) {
  return {{"learning_rate", hp.learning_rate},
          {"hidden_exponent", hp.hidden_exponent},
          {"hidden_units", hp.hidden_units()},
          {"optimizer", nn::to_string(hp.optimizer)},
          {"dropout", hp.dropout},
          {"window", hp.window},
          {"features", data::to_string(hp.features)}};
}

inline forecast::HyperParams hp_from_json(const json& j) {
  forecast::HyperParams hp;
  hp.learning_rate = j.at("learning_rate").get<double>();
  hp.hidden_exponent = j.at("hidden_exponent").get<int>();
  hp.optimizer = nn::parse_optimizer(j.at("optimizer").get<std::string>());
  hp.dropout = j.at("dropout").get<double>();
  hp.window = j.at("window").get<std::size_t>();
  hp.features = data::parse_feature_set(j.at("features").get<std::string>());
  hp.validate();
  return hp;
}

// ---------------------------------------------------------------------------
// Forecast files

struct ForecastTable {
  std::vector<std::size_t> target_rows;
  nn::Tensor actual;     // (N, H)
  nn::Tensor predicted;  // (N, H)
};

inline std::string forecast_csv(const Workspace& ws, const data::WindowedDataset& ds,
                                const forecast::ForecastMatrix& fm) {
  std::ostringstream out;
  out << csv_stamp(ws.hash, ws.config.master_seed);
  out << "target_row,date";
  for (std::size_t h = 1; h <= data::kHorizon; ++h) out << ",actual_" << h;
  for (std::size_t h = 1; h <= data::kHorizon; ++h) out << ",predicted_" << h;
  out << '\n';
  for (std::size_t i = 0; i < ds.size(); ++i) {
    out << ds.target_rows[i] << ',' << ws.date_of(ds.target_rows[i]);
    for (std::size_t h = 0; h < data::kHorizon; ++h) out << ',' << num(ds.Y[i * data::kHorizon + h]);
    for (std::size_t h = 0; h < data::kHorizon; ++h) out << ',' << num(fm.values[i * data::kHorizon + h]);
    out << '\n';
  }
  return out.str();
}

inline ForecastTable read_forecast_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw PipelineError("missing_stage", "missing forecast file " + path.string(), "train");
  ForecastTable t;
  std::vector<double> actual, predicted;
  std::string line;
  bool header = false;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (!header) {
      header = true;
      continue;
    }
    std::vector<std::string> cells;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) cells.push_back(cell);
    if (cells.size() != 2 + 2 * data::kHorizon) throw std::runtime_error("malformed forecast file " + path.string());
    t.target_rows.push_back(std::stoul(cells[0]));
    for (std::size_t h = 0; h < data::kHorizon; ++h) actual.push_back(std::strtod(cells[2 + h].c_str(), nullptr));
    for (std::size_t h = 0; h < data::kHorizon; ++h)
      predicted.push_back(std::strtod(cells[2 + data::kHorizon + h].c_str(), nullptr));
  }
  const std::size_t n = t.target_rows.size();
  t.actual = nn::Tensor({n, data::kHorizon}, std::move(actual));
  t.predicted = nn::Tensor({n, data::kHorizon}, std::move(predicted));
  return t;
}

// ---------------------------------------------------------------------------
// Stages. Each returns a JSON summary.

inline json ingest(const RunConfig& config, std::ostream& log) {
  const Workspace ws = prepare(config);
  const auto& p = ws.plan;
  auto count = [](std::size_t first, std::size_t last) { return last >= first ? last - first + 1 : 0; };
  json inputs = json::object();
  const std::array<const fs::path*, 3> paths = {&config.brent, &config.usdx, &config.sent};
  for (std::size_t c = 0; c < 3; ++c)
    inputs[data::kColumnNames[c]] = {{"path", paths[c]->string()},
                                     {"content_hash", file_hash(*paths[c])},
                                     {"rows", ws.series[c].size()}};
  json norm = json::object();
  for (std::size_t c = 0; c < 3; ++c) {
    const auto col = static_cast<data::Column>(c);
    norm[data::kColumnNames[c]] = {{"min", ws.normalizer.min(col)}, {"max", ws.normalizer.max(col)}};
  }
  const json manifest = {
      {"stage", "ingest"},
      {"config_hash", ws.hash},
      {"master_seed", config.master_seed},
      {"inputs", inputs},
      {"frame",
       {{"rows", ws.raw.size()}, {"first_date", ws.date_of(0)}, {"last_date", ws.date_of(ws.raw.size() - 1)}}},
      {"split",
       {{"horizon", p.horizon},
        {"max_window", config.limits.max_window},
        {"validation_first_target_row", p.validation_first},
        {"test_first_target_row", p.test_first},
        {"train_last_target_row", p.train_last()},
        {"validation_target_rows", count(p.validation_first, p.validation_last())},
        {"test_target_rows", count(p.test_first, p.test_last())},
        {"normalizer_rows", p.normalizer_rows()}}},
      {"normalizer", norm}};
  const bool changed = write_json(ws.layout.manifest(), manifest);
  log << "ingest: " << ws.raw.size() << " aligned rows, " << (changed ? "wrote " : "unchanged ")
      << ws.layout.manifest().string() << '\n';
  return {{"stage", "ingest"}, {"config_hash", ws.hash}, {"rows", ws.raw.size()}, {"changed", changed}};
}

inline std::vector<calib::ModelKey> select_keys(const RunConfig& c, const std::vector<std::string>& override_models) {
  if (override_models.empty()) return c.model_keys();
  std::vector<calib::ModelKey> keys;
  try {
    for (const auto& m : override_models) keys.push_back(calib::parse_model_key(m));
  } catch (const std::invalid_argument& e) {
    throw PipelineError("config", e.what());
  }
  return keys;
}

inline json calibrate(const RunConfig& config, const std::vector<std::string>& only, std::ostream& log) {
  const Workspace ws = prepare(config);
  require_artifact(ws.layout.manifest(), "ingest", ws.hash);
  calib::ObjectiveContext ctx{&ws.frame, ws.plan, train_config(config)};
  gwo::GwoConfig gc;
  gc.pop_size = config.gwo.pop_size;
  gc.iterations = config.gwo.iterations;
  gc.threads = config.gwo.threads;
  json summary = {{"stage", "calibrate"}, {"config_hash", ws.hash}, {"models", json::array()}};
  for (const auto& key : select_keys(config, only)) {
    const fs::path path = ws.layout.calibration(key);
    if (fs::exists(path) && read_json(path).value("config_hash", "") == ws.hash) {
      log << "calibrate: " << key.id() << " up to date\n";
      summary["models"].push_back({{"model", key.id()}, {"skipped", true}});
      continue;
    }
    log << "calibrate: " << key.id() << " (" << config.gwo.runs << " runs, pop " << gc.pop_size << ", "
        << gc.iterations << " iterations)\n"
        << std::flush;
    calib::CalibrationResult res;
    try {
      res = calib::calibrate(key, ctx, gc, config.gwo.runs, config.master_seed, config.limits);
    } catch (const calib::CalibrationFailed& e) {
      throw PipelineError("calibration_failed", e.what(), "calibrate");
    }
    json runs = json::array();
    for (std::size_t r = 0; r < res.runs.size(); ++r) {
      const auto& rec = res.runs[r];
      std::ostringstream csv;
      csv << csv_stamp(ws.hash, config.master_seed);
      gwo::write_trace_csv(csv, rec.trace);
      write_text(ws.layout.trace(key, r), csv.str());
      gc.seed = rec.gwo_seed;
      json run = gwo::trace_metadata(rec.trace, gc);
      run["run"] = r;
      run["eval_seed"] = rec.eval_seed;
      run["best_fitness"] = rec.best_fitness;
      run["best_hyperparameters"] = hp_to_json(rec.best_hp);
      run["trace_file"] = ws.layout.trace(key, r).filename().string();
      runs.push_back(std::move(run));
    }
    const json out = {{"stage", "calibrate"},
                      {"config_hash", ws.hash},
                      {"master_seed", config.master_seed},
                      {"model", key.id()},
                      {"label", res.label()},
                      {"architecture", forecast::to_string(key.arch)},
                      {"pinned_features", key.pinned_features ? json(data::to_string(*key.pinned_features)) : json()},
                      {"best_hyperparameters", hp_to_json(res.best_hp)},
                      {"best_validation_mse", res.best_validation_mse},
                      {"best_run", res.best_run},
                      {"runs", runs}};
    write_json(path, out);
    log << "calibrate: " << key.id() << " best validation MSE " << num(res.best_validation_mse) << " as "
        << res.label() << '\n';
    summary["models"].push_back(
        {{"model", key.id()}, {"label", res.label()}, {"best_validation_mse", res.best_validation_mse}});
  }
  return summary;
}

inline json train(const RunConfig& config, const std::vector<std::string>& only, std::ostream& log) {
  const Workspace ws = prepare(config);
  require_artifact(ws.layout.manifest(), "ingest", ws.hash);
  json summary = {{"stage", "train"}, {"config_hash", ws.hash}, {"models", json::array()}};
  for (const auto& key : select_keys(config, only)) {
    const fs::path cal_path = ws.layout.calibration(key);
    const json cal = require_artifact(cal_path, "calibrate", ws.hash);
    const std::string cal_hash = file_hash(cal_path);
    const fs::path path = ws.layout.model(key);
    if (fs::exists(path)) {
      const json prev = read_json(path);
      if (prev.value("config_hash", "") == ws.hash && prev.value("calibration_hash", "") == cal_hash &&
          fs::exists(ws.layout.forecast(key.id(), "validation")) && fs::exists(ws.layout.forecast(key.id(), "test"))) {
        log << "train: " << key.id() << " up to date\n";
        summary["models"].push_back({{"model", key.id()}, {"skipped", true}});
        continue;
      }
    }
    const auto hp = hp_from_json(cal.at("best_hyperparameters"));
    const auto& best_run = cal.at("runs").at(cal.at("best_run").get<std::size_t>());
    nn::TrainConfig tc = train_config(config);
    tc.seed = best_run.at("eval_seed").get<std::uint64_t>();
    const auto ds = data::make_windows(ws.frame, hp.features, hp.window);
    const auto parts = data::apply_plan(ds, ws.plan);
    forecast::Model model(key.arch, hp);
    log << "train: " << key.id() << " as " << model.label() << '\n' << std::flush;
    const auto report = forecast::fit(model, parts.train, parts.validation, tc);
    const auto val = forecast::predict(model, parts.validation);
    const auto test = forecast::predict(model, parts.test);
    write_text(ws.layout.forecast(key.id(), "validation"), forecast_csv(ws, parts.validation, val));
    write_text(ws.layout.forecast(key.id(), "test"), forecast_csv(ws, parts.test, test));
    const json out = {{"stage", "train"},
                      {"config_hash", ws.hash},
                      {"master_seed", config.master_seed},
                      {"model", key.id()},
                      {"label", model.label()},
                      {"architecture", forecast::to_string(key.arch)},
                      {"calibration_hash", cal_hash},
                      {"hyperparameters", hp_to_json(hp)},
                      {"train_seed", tc.seed},
                      {"train_samples", parts.train.size()},
                      {"epochs_run", report.epochs_run},
                      {"best_epoch", report.best_epoch},
                      {"best_validation_mse", report.best_validation_mse},
                      {"parameter_count", model.network.parameter_count()},
                      {"parameters", nn::save_parameters(model.network)}};
    write_json(path, out);
    summary["models"].push_back({{"model", key.id()}, {"best_validation_mse", report.best_validation_mse}});
  }
  return summary;
}

struct Member {
  calib::ModelKey key;
  std::string label;
  ForecastTable validation;
  ForecastTable test;
  std::string validation_hash;
  std::string test_hash;
};

inline Member load_member(const Workspace& ws, const calib::ModelKey& key) {
  const json m = require_artifact(ws.layout.model(key), "train", ws.hash);
  Member out{key, m.at("label").get<std::string>(), {}, {}, {}, {}};
  const auto vp = ws.layout.forecast(key.id(), "validation");
  const auto tp = ws.layout.forecast(key.id(), "test");
  out.validation = read_forecast_csv(vp);
  out.test = read_forecast_csv(tp);
  out.validation_hash = file_hash(vp);
  out.test_hash = file_hash(tp);
  return out;
}

inline json blend(const RunConfig& config, std::ostream& log) {
  const Workspace ws = prepare(config);
  require_artifact(ws.layout.manifest(), "ingest", ws.hash);
  const auto keys = config.member_keys();
  if (keys.size() < 2) throw PipelineError("config", "blend needs at least two ensemble members");
  std::vector<Member> members;
  for (const auto& k : keys) members.push_back(load_member(ws, k));
  for (const auto& m : members)
    if (m.validation.target_rows != members.front().validation.target_rows ||
        m.test.target_rows != members.front().test.target_rows)
      throw PipelineError("stale_artifact", "member " + m.key.id() + " forecasts different target rows", "train");

  json upstream = json::object();
  for (const auto& m : members) upstream[m.key.id()] = {{"validation", m.validation_hash}, {"test", m.test_hash}};
  if (fs::exists(ws.layout.weights())) {
    const json prev = read_json(ws.layout.weights());
    if (prev.value("config_hash", "") == ws.hash && prev.value("member_forecast_hashes", json()) == upstream &&
        fs::exists(ws.layout.forecast(kEnsembleId, "test"))) {
      log << "blend: up to date\n";
      return {{"stage", "blend"}, {"config_hash", ws.hash}, {"skipped", true}};
    }
  }

  std::vector<nn::Tensor> val, test;
  for (const auto& m : members) {
    val.push_back(m.validation.predicted);
    test.push_back(m.test.predicted);
  }
  const nn::Tensor& targets = members.front().validation.actual;
  gwo::GwoConfig gc;
  gc.pop_size = config.ensemble.pop_size;
  gc.iterations = config.ensemble.iterations;
  gc.seed = derive_seed(config.master_seed, fnv1a("ensemble"));
  const auto res = ensemble::optimize_weights(val, targets, gc);

  std::string targets_bytes;
  for (double v : targets.values()) targets_bytes += num(v) + ";";
  json member_json = json::array();
  for (std::size_t k = 0; k < members.size(); ++k)
    member_json.push_back({{"model", members[k].key.id()}, {"label", members[k].label}, {"weight", res.weights[k]}});
  const json out = {{"stage", "blend"},
                    {"config_hash", ws.hash},
                    {"master_seed", config.master_seed},
                    {"label", ensemble::kEnsembleLabel},
                    {"members", member_json},
                    {"validation_mse", res.validation_mse},
                    {"fitting_slice",
                     {{"split", "validation"},
                      {"rows", targets.dim(0)},
                      {"targets_hash", to_hex(fnv1a(targets_bytes))}}},
                    {"gwo",
                     {{"pop_size", res.search.trace.evaluations / (gc.iterations + 1)},
                      {"iterations", gc.iterations},
                      {"seed", gc.seed},
                      {"evaluations", res.search.trace.evaluations}}},
                    {"member_forecast_hashes", upstream}};

  auto blended_csv = [&](const std::vector<nn::Tensor>& f, const ForecastTable& ref) {
    const nn::Tensor b = ensemble::blend(f, res.weights);
    data::WindowedDataset ds;
    ds.Y = ref.actual;
    ds.target_rows = ref.target_rows;
    return forecast_csv(ws, ds, {b, ensemble::kEnsembleLabel, ref.target_rows});
  };
  write_text(ws.layout.forecast(kEnsembleId, "validation"), blended_csv(val, members.front().validation));
  write_text(ws.layout.forecast(kEnsembleId, "test"), blended_csv(test, members.front().test));
  write_json(ws.layout.weights(), out);
  log << "blend: " << members.size() << " members, validation MSE " << num(res.validation_mse) << '\n';
  return {{"stage", "blend"}, {"config_hash", ws.hash}, {"validation_mse", res.validation_mse}};
}

struct EvaluatedModel {
  std::string id;
  std::string label;
  metrics::MetricReport normalized;
  metrics::MetricReport price;
};

inline std::vector<EvaluatedModel> evaluate_all(const Workspace& ws) {
  std::vector<std::pair<std::string, std::string>> entries;  // id, label
  for (const auto& key : ws.config.model_keys()) {
    const json m = require_artifact(ws.layout.model(key), "train", ws.hash);
    entries.emplace_back(key.id(), m.at("label").get<std::string>());
  }
  if (fs::exists(ws.layout.weights())) {
    require_artifact(ws.layout.weights(), "blend", ws.hash);
    entries.emplace_back(kEnsembleId, ensemble::kEnsembleLabel);
  }
  std::vector<EvaluatedModel> out;
  for (const auto& [id, label] : entries) {
    const auto t = read_forecast_csv(ws.layout.forecast(id, "test"));
    std::vector<double> y(t.actual.values().begin(), t.actual.values().end());
    std::vector<double> yhat(t.predicted.values().begin(), t.predicted.values().end());
    EvaluatedModel e{id, label, metrics::evaluate(y, yhat, ws.config.mspe), {}};
    for (auto& v : y) v = ws.normalizer.invert(data::Column::Brent, v);
    for (auto& v : yhat) v = ws.normalizer.invert(data::Column::Brent, v);
    e.price = metrics::evaluate(y, yhat, ws.config.mspe);
    out.push_back(std::move(e));
  }
  return out;
}

inline std::string metrics_csv(const Workspace& ws, const std::vector<EvaluatedModel>& models, bool price) {
  std::string s = csv_stamp(ws.hash, ws.config.master_seed);
  s += std::string(metrics::csv_header()) + ",units,config_hash,master_seed\n";
  for (const auto& m : models) {
    const auto& r = price ? m.price : m.normalized;
    s += m.label + "," + num(r.mae) + "," + num(r.mse) + "," + num(r.rmse) + "," + num(r.mspe) + "," + num(r.mape) +
         "," + num(r.r2) + "," + std::to_string(r.percentage_excluded) + "," + (price ? "usd" : "normalized") + "," +
         ws.hash + "," + std::to_string(ws.config.master_seed) + "\n";
  }
  return s;
}

inline json evaluate(const RunConfig& config, std::ostream& log) {
  const Workspace ws = prepare(config);
  const auto models = evaluate_all(ws);
  write_text(ws.layout.metrics(false), metrics_csv(ws, models, false));
  write_text(ws.layout.metrics(true), metrics_csv(ws, models, true));
  json rows = json::array();
  for (const auto& m : models) {
    log << "evaluate: " << m.label << " test MSE " << num(m.normalized.mse) << " R2 " << num(m.normalized.r2) << '\n';
    rows.push_back({{"model", m.label}, {"mse", m.normalized.mse}, {"r2", m.normalized.r2}});
  }
  return {{"stage", "evaluate"}, {"config_hash", ws.hash}, {"metrics", rows}};
}

inline json report(const RunConfig& config, std::ostream& log) {
  const Workspace ws = prepare(config);
  const fs::path dir = ws.layout.report_dir();
  const std::string stamp = csv_stamp(ws.hash, config.master_seed);

  std::string best = stamp + "model,validation_mse,window,learning_rate,dropout,hidden_units,optimizer,features\n";
  std::string runtime =
      stamp + "model,runs,evaluations,failed_evaluations,calibration_seconds,epochs_run,parameter_count\n";
  std::vector<std::pair<std::string, std::string>> forecast_ids;
  for (const auto& key : config.model_keys()) {
    const json cal = require_artifact(ws.layout.calibration(key), "calibrate", ws.hash);
    const json mod = require_artifact(ws.layout.model(key), "train", ws.hash);
    const auto& runs = cal.at("runs");
    // Convergence: best fitness per iteration, one column per run.
    std::vector<std::vector<std::string>> columns;
    for (const auto& r : runs) {
      std::ifstream in(ws.layout.calibration(key).parent_path() / r.at("trace_file").get<std::string>());
      std::vector<std::string> col;
      std::string line;
      bool header = false;
      while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        if (!header) {
          header = true;
          continue;
        }
        col.push_back(line.substr(line.find(',') + 1));
      }
      columns.push_back(std::move(col));
    }
    std::string conv = stamp + "iteration";
    for (std::size_t r = 0; r < columns.size(); ++r) conv += ",run_" + std::to_string(r);
    conv += "\n";
    for (std::size_t t = 0; !columns.empty() && t < columns.front().size(); ++t) {
      conv += std::to_string(t);
      for (const auto& c : columns) conv += "," + (t < c.size() ? c[t] : std::string());
      conv += "\n";
    }
    write_text(dir / "convergence" / (key.id() + ".csv"), conv);

    const auto& hp = cal.at("best_hyperparameters");
    best += cal.at("label").get<std::string>() + "," + num(cal.at("best_validation_mse").get<double>()) + "," +
            std::to_string(hp.at("window").get<std::size_t>()) + "," + num(hp.at("learning_rate").get<double>()) +
            "," + num(hp.at("dropout").get<double>()) + "," + std::to_string(hp.at("hidden_units").get<std::size_t>()) +
            "," + hp.at("optimizer").get<std::string>() + "," + hp.at("features").get<std::string>() + "\n";
    std::size_t evals = 0, failed = 0;
    double seconds = 0.0;
    for (const auto& r : runs) {
      evals += r.at("evaluations").get<std::size_t>();
      failed += r.at("failed_evaluations").get<std::size_t>();
      seconds += r.at("wall_time_seconds").get<double>();
    }
    runtime += cal.at("label").get<std::string>() + "," + std::to_string(runs.size()) + "," + std::to_string(evals) +
               "," + std::to_string(failed) + "," + num(seconds) + "," +
               std::to_string(mod.at("epochs_run").get<std::size_t>()) + "," +
               std::to_string(mod.at("parameter_count").get<std::size_t>()) + "\n";
    forecast_ids.emplace_back(key.id(), mod.at("label").get<std::string>());
  }
  write_text(dir / "best_solutions.csv", best);
  write_text(dir / "runtime_summary.csv", runtime);

  if (fs::exists(ws.layout.weights())) {
    const json w = require_artifact(ws.layout.weights(), "blend", ws.hash);
    std::string weights = stamp + "model,weight\n";
    for (const auto& m : w.at("members"))
      weights += m.at("label").get<std::string>() + "," + num(m.at("weight").get<double>()) + "\n";
    write_text(dir / "ensemble_weights.csv", weights);
    forecast_ids.emplace_back(kEnsembleId, ensemble::kEnsembleLabel);
  }

  // Actual vs predicted on the test slice, in price units.
  for (const auto& [id, label] : forecast_ids) {
    const auto t = read_forecast_csv(ws.layout.forecast(id, "test"));
    std::string csv = stamp + "date,target_row";
    for (std::size_t h = 1; h <= data::kHorizon; ++h)
      csv += ",actual_" + std::to_string(h) + ",predicted_" + std::to_string(h);
    csv += "\n";
    for (std::size_t i = 0; i < t.target_rows.size(); ++i) {
      csv += ws.date_of(t.target_rows[i]) + "," + std::to_string(t.target_rows[i]);
      for (std::size_t h = 0; h < data::kHorizon; ++h) {
        const std::size_t at = i * data::kHorizon + h;
        csv += "," + num(ws.normalizer.invert(data::Column::Brent, t.actual[at])) + "," +
               num(ws.normalizer.invert(data::Column::Brent, t.predicted[at]));
      }
      csv += "\n";
    }
    write_text(dir / "actual_vs_predicted" / (id + ".csv"), csv);
  }
  log << "report: wrote " << dir.string() << '\n';
  return {{"stage", "report"}, {"config_hash", ws.hash}, {"directory", dir.string()}};
}

}  // namespace gwoens::pipeline
