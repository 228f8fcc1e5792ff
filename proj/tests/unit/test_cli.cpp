#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "ventbench/cli.hpp"

namespace {

namespace fs = std::filesystem;

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run(std::vector<std::string> args) {
  args.insert(args.begin(), "ventbench");
  std::vector<const char*> argv;
  for (const std::string& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = ventbench::parse_and_dispatch(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

TEST(Cli, HelpExitsZero) {
  const Result r = run({"--help"});
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("benchmark"), std::string::npos);
  EXPECT_NE(r.out.find("train-ctrl"), std::string::npos);
  EXPECT_EQ(run({"collect", "--help"}).code, 0);
}

TEST(Cli, UnknownSubcommandShowsUsage) {
  const Result r = run({"explode"});
  EXPECT_NE(r.code, 0);
  EXPECT_NE(r.err.find("Usage"), std::string::npos);
  EXPECT_NE(run({}).code, 0);
}

TEST(Cli, MissingConfigIsConfigInvalid) {
  const Result r = run({"collect", "--config", "/nonexistent/cfg.json"});
  EXPECT_NE(r.code, 0);
  EXPECT_NE(r.err.find("error[config-invalid]"), std::string::npos);
}

TEST(Cli, UnknownSettingIsConfigInvalid) {
  const Result r = run({"collect", "--config", VENTCTL_CONFIG_DIR "/iso6.json", "--setting", "R50C50",
                        "--out", VENTCTL_TEST_TMP "/cli-bad"});
  EXPECT_NE(r.code, 0);
  EXPECT_NE(r.err.find("error[config-invalid]"), std::string::npos);
}

TEST(Cli, MissingPredecessorIsStageFailed) {
  const fs::path out = fs::path(VENTCTL_TEST_TMP) / "cli-empty";
  fs::remove_all(out);
  const Result r = run({"train-sim", "--config", VENTCTL_CONFIG_DIR "/iso6.json", "--setting",
                        "R5C50", "--out", out.string(), "-q"});
  EXPECT_NE(r.code, 0);
  EXPECT_NE(r.err.find("error[stage-failed]"), std::string::npos);
  EXPECT_NE(r.err.find("collect"), std::string::npos);
}

TEST(Cli, OutputDirectoryPrecedence) {
  const fs::path env_out = fs::path(VENTCTL_TEST_TMP) / "cli-env";
  const fs::path flag_out = fs::path(VENTCTL_TEST_TMP) / "cli-flag";
  fs::remove_all(env_out);
  fs::remove_all(flag_out);
  ::setenv("VENTBENCH_OUT", env_out.c_str(), 1);
  const std::string cfg = VENTCTL_CONFIG_DIR "/iso6.json";
  ASSERT_EQ(run({"collect", "--config", cfg, "--setting", "R20C10", "-q"}).code, 0);
  EXPECT_TRUE(fs::exists(env_out / "settings" / "R20C10" / "dataset_PIP10.jsonl"));
  ASSERT_EQ(run({"collect", "--config", cfg, "--setting", "R20C10", "--out", flag_out.string(),
                 "-q"}).code,
            0);
  EXPECT_TRUE(fs::exists(flag_out / "settings" / "R20C10" / "dataset_PIP35.jsonl"));
  ::unsetenv("VENTBENCH_OUT");
}

TEST(Cli, SeedOverrideChangesArtifacts) {
  const fs::path a = fs::path(VENTCTL_TEST_TMP) / "cli-seed-a";
  const fs::path b = fs::path(VENTCTL_TEST_TMP) / "cli-seed-b";
  const std::string cfg = VENTCTL_CONFIG_DIR "/iso6.json";
  ASSERT_EQ(run({"collect", "--config", cfg, "--setting", "R5C10", "--out", a.string(), "-q"}).code, 0);
  ASSERT_EQ(run({"collect", "--config", cfg, "--setting", "R5C10", "--out", b.string(), "--seed",
                 "8", "-q"}).code,
            0);
  std::ifstream fa(a / "settings/R5C10/dataset_PIP20.jsonl"), fb(b / "settings/R5C10/dataset_PIP20.jsonl");
  std::stringstream sa, sb;
  sa << fa.rdbuf();
  sb << fb.rdbuf();
  EXPECT_NE(sa.str(), sb.str());
}

}  // namespace
