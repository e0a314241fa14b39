// gwoens: command-line driver for the staged forecasting pipeline.

#include <cstdint>
#include <exception>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "gwoens/pipeline.hpp"
#include "gwoens/synth.hpp"

namespace fs = std::filesystem;
namespace pl = gwoens::pipeline;
using nlohmann::json;

namespace {

int exit_code(const std::string& code) {
  static const std::map<std::string, int> codes = {{"usage", 2},         {"config", 2},         {"data", 3},
                                                   {"missing_stage", 4}, {"stale_artifact", 5}, {"locked", 6},
                                                   {"calibration_failed", 7}};
  const auto it = codes.find(code);
  return it == codes.end() ? 1 : it->second;
}

int fail(const std::string& command, const std::string& code, const std::string& message,
         const std::string& stage = {}) {
  json err = {{"error", code}, {"message", message}, {"command", command}};
  if (!stage.empty()) err["stage"] = stage;
  std::cerr << err.dump() << std::endl;
  return exit_code(code);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ',') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else if (c != ' ') {
      cur += c;
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"GWO-calibrated recurrent ensemble forecasting pipeline"};
  app.require_subcommand(1, 1);
  app.fallthrough();

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string models;
  std::string out;
  std::size_t rows = 400;
  app.add_option("--config", config_path, "Run configuration (JSON)");
  app.add_option("--seed", seed, "Master seed (overrides the config)");
  app.add_option("--models", models, "Comma-separated model list (overrides the config)");
  app.add_option("--out", out, "Output directory (overrides the config)");

  const std::vector<std::pair<std::string, std::string>> verbs = {
      {"ingest", "Validate, align and normalize the input series; write manifest.json"},
      {"calibrate", "GWO search of hyperparameters for each model"},
      {"train", "Train each calibrated model and write validation/test forecasts"},
      {"blend", "Fit ensemble weights on the validation slice"},
      {"evaluate", "Test-set metrics for every model and the ensemble"},
      {"report", "Convergence, actual-vs-predicted and runtime exports"},
      {"synth", "Write a synthetic BRENT/USDX/SENT dataset and a matching config"}};
  for (const auto& [name, help] : verbs) {
    auto* sub = app.add_subcommand(name, help);
    if (name == "synth") sub->add_option("--rows", rows, "Business days to generate")->check(CLI::Range(60, 100000));
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail("", "usage", e.what());
  }

  const std::string verb = app.get_subcommands().front()->get_name();
  try {
    if (verb == "synth") {
      if (out.empty()) return fail(verb, "usage", "synth requires --out");
      gwoens::synth::SynthConfig sc;
      sc.rows = rows;
      if (seed) sc.seed = *seed;
      const fs::path dir(out);
      fs::create_directories(dir);
      const auto series = gwoens::synth::generate(sc);
      gwoens::synth::write_csv(series.brent, dir / "brent.csv");
      gwoens::synth::write_csv(series.usdx, dir / "usdx.csv");
      gwoens::synth::write_csv(series.sent, dir / "sent.csv");
      pl::write_json(dir / "config.json", pl::synthetic_config_json());
      std::cout << json{{"stage", "synth"}, {"rows", rows}, {"directory", dir.string()}}.dump() << std::endl;
      return 0;
    }

    if (config_path.empty()) return fail(verb, "usage", verb + " requires --config");
    pl::RunConfig config = pl::load_config(config_path);
    if (seed) config.master_seed = *seed;
    if (!out.empty()) config.out = out;
    const auto only = split_list(models);
    if (!only.empty() && verb != "calibrate" && verb != "train") config.models = only;

    pl::validate(config);
    pl::OutputLock lock(config.out);
    json summary;
    if (verb == "ingest") summary = pl::ingest(config, std::cout);
    else if (verb == "calibrate") summary = pl::calibrate(config, only, std::cout);
    else if (verb == "train") summary = pl::train(config, only, std::cout);
    else if (verb == "blend") summary = pl::blend(config, std::cout);
    else if (verb == "evaluate") summary = pl::evaluate(config, std::cout);
    else if (verb == "report") summary = pl::report(config, std::cout);
    std::cout << summary.dump() << std::endl;
    return 0;
  } catch (const pl::PipelineError& e) {
    return fail(verb, e.code(), e.what(), e.stage());
  } catch (const gwoens::data::DataError& e) {
    return fail(verb, "data", e.what());
  } catch (const std::exception& e) {
    return fail(verb, "internal", e.what());
  }
}
