#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <sys/wait.h>
#include <unistd.h>

#include <nlohmann/json.hpp>

#include "gwoens/pipeline.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Outcome {
  int code = -1;
  std::string out, err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class Cli : public ::testing::Test {
 protected:
  static inline fs::path dir;

  static void SetUpTestSuite() {
    dir = fs::temp_directory_path() / ("gwoens_cli_" + std::to_string(::getpid()));
    fs::remove_all(dir);
    fs::create_directories(dir);
    ASSERT_EQ(run("synth --rows 120 --out " + dir.string()).code, 0);
    json cfg = json::parse(slurp(dir / "config.json"));
    cfg["gwo"] = {{"pop_size", 4}, {"iterations", 1}, {"runs", 1}, {"threads", 1}};
    cfg["train"] = {{"batch_size", 16}, {"max_epochs", 3}, {"patience", 1}};
    cfg["search"] = {{"max_hidden_exponent", 2}, {"max_window", 8}};
    cfg["models"] = {"BI_GRU", "SENT-Bi-LSTM"};
    cfg["ensemble"] = {{"members", json::array()}, {"pop_size", 4}, {"iterations", 5}};
    std::ofstream(dir / "tiny.json") << cfg.dump(2);
  }

  static void TearDownTestSuite() { fs::remove_all(dir); }

  static Outcome run(const std::string& args) {
    static int n = 0;
    const fs::path o = fs::temp_directory_path() / ("gwoens_out_" + std::to_string(::getpid()) + "_" + std::to_string(n));
    const fs::path e = fs::temp_directory_path() / ("gwoens_err_" + std::to_string(::getpid()) + "_" + std::to_string(n++));
    const std::string cmd = std::string(GWOENS_CLI_PATH) + " " + args + " >" + o.string() + " 2>" + e.string();
    const int status = std::system(cmd.c_str());
    Outcome r{WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(o), slurp(e)};
    fs::remove(o);
    fs::remove(e);
    return r;
  }

  static std::string config() { return "--config " + (dir / "tiny.json").string(); }
  static std::string with_out(const std::string& name) { return config() + " --out " + (dir / name).string(); }
};

json last_json_line(const std::string& text) {
  std::istringstream in(text);
  std::string line, last;
  while (std::getline(in, line))
    if (!line.empty()) last = line;
  return json::parse(last);
}

}  // namespace

TEST_F(Cli, FullPipelineWritesEveryArtifact) {
  const std::string args = with_out("full");
  for (const char* verb : {"ingest", "calibrate", "train", "blend", "evaluate", "report"}) {
    const auto r = run(std::string(verb) + " " + args);
    ASSERT_EQ(r.code, 0) << verb << ": " << r.err;
  }
  const fs::path out = dir / "full";
  for (const char* f : {"manifest.json", "calibration/BI_GRU.json", "calibration/BI_GRU.run0.trace.csv",
                        "calibration/SENT__BI_LSTM.json", "models/BI_GRU.json", "forecasts/BI_GRU.test.csv",
                        "forecasts/SENT__BI_LSTM.validation.csv", "forecasts/ENSEMBLE.test.csv",
                        "ensemble/weights.json", "metrics.csv", "metrics_price.csv",
                        "report/convergence/BI_GRU.csv", "report/best_solutions.csv", "report/runtime_summary.csv",
                        "report/ensemble_weights.csv", "report/actual_vs_predicted/ENSEMBLE.csv"})
    EXPECT_TRUE(fs::is_regular_file(out / f)) << f;
  EXPECT_FALSE(fs::exists(out / ".lock"));

  const auto metrics = slurp(out / "metrics.csv");
  EXPECT_EQ(metrics.rfind("# config_hash=", 0), 0u);
  EXPECT_NE(metrics.find("\nmodel,mae,mse,rmse,mspe,mape,r2,percentage_excluded,units,config_hash,master_seed\n"),
            std::string::npos);
  EXPECT_NE(metrics.find("\nGWO-Ensemble,"), std::string::npos);
  EXPECT_NE(metrics.find("\nSENT-Bi-LSTM,"), std::string::npos);

  const auto weights = json::parse(slurp(out / "ensemble/weights.json"));
  double total = 0.0;
  for (const auto& m : weights["members"]) total += m["weight"].get<double>();
  EXPECT_NEAR(total, 1.0, 1e-12);

  const auto trace = slurp(out / "calibration/BI_GRU.run0.trace.csv");
  EXPECT_NE(trace.find("\niteration,best_fitness\n"), std::string::npos);

  // Rerunning a finished stage is a no-op, and a fresh blend is byte-identical.
  const auto before = slurp(out / "ensemble/weights.json");
  fs::remove(out / "ensemble/weights.json");
  ASSERT_EQ(run("blend " + args).code, 0);
  EXPECT_EQ(slurp(out / "ensemble/weights.json"), before);
  const auto again = run("calibrate " + args);
  ASSERT_EQ(again.code, 0);
  const auto summary = last_json_line(again.out);
  ASSERT_EQ(summary["models"].size(), 2u) << again.out;
  for (const auto& m : summary["models"]) EXPECT_TRUE(m.value("skipped", false)) << again.out;

  // A different master seed makes downstream artifacts stale.
  const auto stale = run("train " + args + " --seed 43");
  EXPECT_EQ(stale.code, 5);
  const auto err = json::parse(stale.err);
  EXPECT_EQ(err["error"], "stale_artifact");
  EXPECT_EQ(err["command"], "train");
}

TEST_F(Cli, EvaluateBeforeTrainingIsMissingStage) {
  const std::string args = with_out("early");
  ASSERT_EQ(run("ingest " + args).code, 0);
  const auto r = run("evaluate " + args);
  EXPECT_EQ(r.code, 4);
  const auto err = json::parse(r.err);
  EXPECT_EQ(err["error"], "missing_stage");
  EXPECT_TRUE(err.contains("message"));
  EXPECT_TRUE(err.contains("stage"));
}

TEST_F(Cli, LockedOutputDirectory) {
  fs::create_directories(dir / "locked");
  std::ofstream(dir / "locked" / ".lock") << "1\n";
  const auto r = run("ingest " + with_out("locked"));
  EXPECT_EQ(r.code, 6);
  EXPECT_EQ(json::parse(r.err)["error"], "locked");
  EXPECT_TRUE(fs::exists(dir / "locked" / ".lock"));
}

TEST_F(Cli, UsageAndConfigErrors) {
  EXPECT_EQ(run("").code, 2);
  EXPECT_EQ(run("frobnicate").code, 2);
  const auto no_config = run("ingest");
  EXPECT_EQ(no_config.code, 2);
  EXPECT_EQ(json::parse(no_config.err)["error"], "usage");
  EXPECT_EQ(run("synth").code, 2);
  EXPECT_EQ(run("synth --rows 5 --out " + (dir / "x").string()).code, 2);

  std::ofstream(dir / "bad.json") << R"({"data": {"brent": "brent.csv"}, "gwo": {"popsize": 3}})";
  const auto bad = run("ingest --config " + (dir / "bad.json").string());
  EXPECT_EQ(bad.code, 2);
  EXPECT_EQ(json::parse(bad.err)["error"], "config");

  std::ofstream(dir / "broken.json") << "{not json";
  EXPECT_EQ(run("ingest --config " + (dir / "broken.json").string()).code, 2);
}

TEST_F(Cli, MalformedDataIsReported) {
  fs::create_directories(dir / "baddata");
  for (const char* f : {"usdx.csv", "sent.csv"}) fs::copy_file(dir / f, dir / "baddata" / f);
  std::ofstream(dir / "baddata" / "brent.csv") << "date,value\n2020-01-01,1\n2020-01-01,2\n";
  json cfg = json::parse(slurp(dir / "tiny.json"));
  std::ofstream(dir / "baddata" / "config.json") << cfg.dump();
  const auto r = run("ingest --config " + (dir / "baddata" / "config.json").string());
  EXPECT_EQ(r.code, 3);
  EXPECT_NE(json::parse(r.err)["message"].get<std::string>().find("duplicate date"), std::string::npos);
}

TEST(ConfigHash, IgnoresModelListButNotSeeds) {
  const fs::path d = fs::temp_directory_path() / ("gwoens_hash_" + std::to_string(::getpid()));
  fs::create_directories(d);
  for (const char* f : {"brent.csv", "usdx.csv", "sent.csv"}) std::ofstream(d / f) << "date,value\n2020-01-01,1\n";
  auto c = gwoens::pipeline::config_from_json(gwoens::pipeline::synthetic_config_json(), d);
  const auto h = gwoens::pipeline::config_hash(c);
  c.models = {"BI_GRU"};
  c.out = d / "elsewhere";
  EXPECT_EQ(gwoens::pipeline::config_hash(c), h);
  c.master_seed = 7;
  EXPECT_NE(gwoens::pipeline::config_hash(c), h);
  fs::remove_all(d);
}
