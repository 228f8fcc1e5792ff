#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "ventctl/bench.hpp"
#include "ventctl/errors.hpp"

namespace ventctl {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

json tiny_document(const json& settings) {
  return json{
      {"name", "tiny"},
      {"seed", 5},
      {"waveform", {{"pips", {15, 30}}}},
      {"settings", settings},
      {"collection", {{"breaths_per_waveform", 12}}},
      {"simulator_training", {{"epochs", 20}}},
      {"pid_grid", {{"kp", {0.5, 2, 10}}, {"ki", {0, 1, 4}}, {"kd", {0}}}},
      {"controller", {{"lambdas", {0.1, 1.0}}, {"epochs", 4}}},
      {"sample_efficiency",
       {{"setting", "R5C50"},
        {"epochs", 3},
        {"reinforce", {{"max_episodes", 24}, {"score_every", 6}}}}},
      {"open_loop_distance", {{"horizon", 29}, {"samples", 10}}},
      {"balloon_transfer", true},
  };
}

json one_setting() { return json::array({{{"R", 5}, {"C", 50}}}); }

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::path(VENTCTL_TEST_TMP) / name;
  fs::remove_all(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

struct BenchRun {
  ExperimentConfig cfg;
  RunContext ctx;

  BenchRun(const json& doc, const fs::path& out) : cfg(parse_experiment_config(doc)) {
    cfg.set_output_dir(out);
    ctx.config = &cfg;
  }
};

TEST(Bench, StagesRequireTheirInputs) {
  BenchRun run(tiny_document(one_setting()), fresh_dir("missing"));
  const SettingConfig& s = run.cfg.settings[0];
  EXPECT_THROW(stage_train_sim(run.ctx, s), StageFailed);
  EXPECT_THROW(stage_train_ctrl(run.ctx, s), StageFailed);
  try {
    stage_score(run.ctx, s);
    FAIL();
  } catch (const StageFailed& e) {
    EXPECT_NE(std::string(e.what()).find("tune-pid"), std::string::npos);
  }
}

TEST(Bench, StagesResumeFromDisk) {
  const fs::path out = fresh_dir("resume");
  BenchRun run(tiny_document(one_setting()), out);
  const SettingConfig& s = run.cfg.settings[0];
  stage_collect(run.ctx, s);
  stage_tune_pid(run.ctx, s);
  stage_train_sim(run.ctx, s);
  // A separate context over the same tree picks up where the first stopped.
  BenchRun later(tiny_document(one_setting()), out);
  const SimulatorEvaluation ev = stage_eval_sim(later.ctx, later.cfg.settings[0]);
  EXPECT_TRUE(std::isfinite(ev.mae));
  EXPECT_EQ(ev.distance.samples, 10u);
  stage_train_ctrl(later.ctx, later.cfg.settings[0]);
  const PerformanceRow row = stage_score(later.ctx, later.cfg.settings[0]);
  EXPECT_TRUE(std::isfinite(row.pid_score));
  EXPECT_TRUE(std::isfinite(row.learned_score));
}

TEST(Bench, ArtifactsFromAnotherConfigAreStale) {
  const fs::path out = fresh_dir("stale");
  BenchRun run(tiny_document(one_setting()), out);
  stage_collect(run.ctx, run.cfg.settings[0]);
  json other = tiny_document(one_setting());
  other["seed"] = 6;
  BenchRun rerun(other, out);
  try {
    stage_train_sim(rerun.ctx, rerun.cfg.settings[0]);
    FAIL();
  } catch (const StageFailed& e) {
    EXPECT_NE(std::string(e.what()).find("different config"), std::string::npos);
  }
}

TEST(Bench, PerformanceSmokeEmitsBothScores) {
  const fs::path out = fresh_dir("smoke");
  BenchRun run(tiny_document(one_setting()), out);
  const ResultBundle b = run_performance_experiment(run.ctx);
  ASSERT_EQ(b.performance.size(), 1u);
  EXPECT_TRUE(std::isfinite(b.performance[0].pid_score));
  EXPECT_TRUE(std::isfinite(b.performance[0].learned_score));
  const std::string csv = slurp(out / "performance.csv");
  EXPECT_EQ(csv.substr(0, csv.find('\n')),
            "setting,kp,ki,kd,pid_score,lambda,learned_score,improvement,config_hash,seed");
  EXPECT_NE(csv.find(run.cfg.hash()), std::string::npos);
}

TEST(Bench, SingleSettingRobustnessEqualsPerformance) {
  BenchRun run(tiny_document(one_setting()), fresh_dir("robust1"));
  const ResultBundle perf = run_performance_experiment(run.ctx);
  const RobustnessResult rob = run_robustness_experiment(run.ctx);
  EXPECT_EQ(rob.pid, perf.performance[0].pid);
  EXPECT_EQ(rob.lambda, perf.performance[0].lambda);
  EXPECT_EQ(rob.pid_mean, perf.performance[0].pid_score);
  EXPECT_EQ(rob.learned_mean, perf.performance[0].learned_score);
}

TEST(Bench, ThreeSettingRobustnessWritesOnePolicyAndOneRow) {
  const fs::path out = fresh_dir("robust3");
  json doc = tiny_document(json::array({{{"R", 20}, {"C", 10}}, {{"R", 20}, {"C", 20}}, {{"R", 20}, {"C", 50}}}));
  doc["sample_efficiency"] = {{"enabled", false}};
  BenchRun run(doc, out);
  run_performance_experiment(run.ctx);
  const RobustnessResult rob = run_robustness_experiment(run.ctx);
  EXPECT_EQ(rob.settings.size(), 3u);
  EXPECT_TRUE(fs::exists(out / "robustness" / "policy.json"));
  const std::string csv = slurp(out / "robustness.csv");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 2);
}

TEST(Bench, BenchmarkIsByteIdenticalAcrossRunsAndJobCounts) {
  const fs::path a = fresh_dir("repro-a"), b = fresh_dir("repro-b");
  const json doc = tiny_document(json::array({{{"R", 5}, {"C", 50}}, {{"R", 20}, {"C", 20}}}));
  BenchRun ra(doc, a), rb(doc, b);
  ra.ctx.plot = rb.ctx.plot = true;
  rb.ctx.jobs = 2;
  run_benchmark(ra.ctx);
  run_benchmark(rb.ctx);
  std::size_t files = 0;
  for (const auto& entry : fs::recursive_directory_iterator(a)) {
    if (!entry.is_regular_file()) continue;
    const fs::path rel = fs::relative(entry.path(), a);
    ASSERT_TRUE(fs::exists(b / rel)) << rel;
    EXPECT_EQ(slurp(entry.path()), slurp(b / rel)) << rel;
    ++files;
  }
  EXPECT_GT(files, 20u);
  EXPECT_TRUE(fs::exists(a / "transfer.csv"));
  EXPECT_TRUE(fs::exists(a / "sample_efficiency" / "summary.json"));
  EXPECT_TRUE(fs::exists(a / "settings" / "R5C50" / "trajectory.svg"));
  const json manifest = json::parse(slurp(a / "manifest.json"));
  EXPECT_EQ(manifest.at("config_hash"), ra.cfg.hash());
  const std::string config = slurp(a / "config.json");
  EXPECT_EQ(config.find("output_dir"), std::string::npos);
}

TEST(Bench, FilteredBenchmarkSkipsMissingSampleEfficiencySetting) {
  const fs::path out = fresh_dir("filtered");
  BenchRun run(tiny_document(json::array({{{"R", 5}, {"C", 50}}, {{"R", 20}, {"C", 20}}})), out);
  run.cfg.filter_settings({"R20C20"});
  const ResultBundle b = run_benchmark(run.ctx);
  EXPECT_FALSE(b.sample_efficiency.has_value());
  EXPECT_EQ(b.performance.size(), 1u);
}

TEST(Bench, ZeroEpisodeSampleEfficiencyGivesEmptyCurve) {
  const fs::path out = fresh_dir("se-zero");
  json doc = tiny_document(one_setting());
  doc["sample_efficiency"]["epochs"] = 0;
  doc["sample_efficiency"]["reinforce"]["max_episodes"] = 0;
  BenchRun run(doc, out);
  const SettingConfig& s = run.cfg.settings[0];
  stage_collect(run.ctx, s);
  stage_train_sim(run.ctx, s);
  const SampleEfficiencyResult r = run_sample_efficiency_experiment(run.ctx);
  EXPECT_EQ(r.analytic.episodes, 0u);
  EXPECT_EQ(r.reinforce.episodes, 0u);
  EXPECT_TRUE(fs::exists(out / "sample_efficiency" / "analytic.csv"));
}

}  // namespace
}  // namespace ventctl
