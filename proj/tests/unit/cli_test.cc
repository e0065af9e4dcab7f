#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "cli.h"
#include "fedsig/error.h"
#include "fedsig/parallel.h"

namespace fedsig {
namespace {

namespace fs = std::filesystem;

struct Outcome {
  int code;
  std::string out;
  std::string err;
};

Outcome call(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

TEST(Cli, HelpListsEveryConfigFlag) {
  const auto r = call({"--help"});
  EXPECT_EQ(r.code, 0);
  const auto keys = config_json(default_config(ExperimentKind::kSingleRun));
  for (const auto& [key, value] : keys.items()) {
    EXPECT_NE(r.out.find("--" + key), std::string::npos) << key;
  }
  EXPECT_NE(r.out.find("--preset"), std::string::npos);
  EXPECT_EQ(call({"fl-scalability", "--help"}).code, 0);
}

TEST(Cli, ErrorsAreJson) {
  for (const auto& args : std::vector<std::vector<std::string>>{
           {}, {"bogus"}, {"single-run", "--unknown", "1"}, {"single-run", "--epochs", "-3"},
           {"single-run", "--preset", "huge"}}) {
    const auto r = call(args);
    EXPECT_EQ(r.code, cli::kUsageFailure);
    const auto j = nlohmann::json::parse(r.err);
    EXPECT_TRUE(j["error"]["kind"].is_string());
    EXPECT_TRUE(j["error"]["message"].is_string());
  }
  const auto missing = call({"single-run", "--data_source", "svc", "--svc_task1", "/nonexistent"});
  EXPECT_EQ(missing.code, cli::kRunFailure);
  EXPECT_EQ(nlohmann::json::parse(missing.err)["error"]["kind"], "data");
}

TEST(Cli, LayeringDefaultsPresetFileFlags) {
  const fs::path file = fs::temp_directory_path() / "fedsig_cli_config.json";
  std::ofstream(file) << R"({"epochs": 7, "learning_rate": 0.5, "sweep": [3, 5]})";
  const auto c = cli::resolve_config({"centralized-kernel-sweep", "--preset", "desk",
                                      "--config", file.string(), "--epochs", "9",
                                      "--channel_widths", "2,3", "--seed", "12"});
  EXPECT_EQ(c.data_source, "synthetic");   // preset
  EXPECT_EQ(c.learning_rate, 0.5);         // file
  EXPECT_EQ(c.sweep, (std::vector<double>{3, 5}));
  EXPECT_EQ(c.epochs, 9u);                 // flag beats file
  EXPECT_EQ(c.channel_widths, (std::vector<std::size_t>{2, 3}));
  EXPECT_EQ(c.seed, 12u);
}

TEST(Cli, BadConfigFile) {
  const fs::path file = fs::temp_directory_path() / "fedsig_cli_bad.json";
  std::ofstream(file) << "{ not json";
  const auto r = call({"single-run", "--config", file.string()});
  EXPECT_EQ(r.code, cli::kRunFailure);
  EXPECT_EQ(nlohmann::json::parse(r.err)["error"]["kind"], "parse");
  EXPECT_EQ(call({"single-run", "--config", "/nonexistent.json"}).code, cli::kUsageFailure);
}

TEST(Cli, RunsAndPrintsSummary) {
  const fs::path out = fs::temp_directory_path() / "fedsig_cli_run";
  fs::remove_all(out);
  const auto r = call({"single-run", "--preset", "desk", "--out", out.string(),
                       "--synth_users", "4", "--epochs", "1", "--channel_widths", "2"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto summary = nlohmann::json::parse(r.out);
  EXPECT_EQ(summary["experiment"], "single-run");
  EXPECT_TRUE(fs::exists(out / "summary.json"));
}

TEST(Cli, ThreadCapFromEnvironment) {
  ::setenv("FEDSIG_THREADS", "3", 1);
  EXPECT_EQ(thread_cap(), 3u);
  ::setenv("FEDSIG_THREADS", "zero", 1);
  EXPECT_GE(thread_cap(), 1u);
  ::unsetenv("FEDSIG_THREADS");
}

}  // namespace
}  // namespace fedsig
