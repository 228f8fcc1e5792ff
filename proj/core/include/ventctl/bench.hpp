#pragma once

// End-to-end experiment harness. Every stage reads its inputs from the output
// tree and writes its own artifacts there, so stages can be rerun one at a
// time. Artifacts are stamped with the config hash and seed and contain no
// timing information.

#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ventctl/bench_config.hpp"
#include "ventctl/policy.hpp"

namespace ventctl {

struct RunContext {
  const ExperimentConfig* config = nullptr;
  std::size_t jobs = 1;
  bool plot = false;
  std::ostream* log = nullptr;  // progress messages; may be null

  const ExperimentConfig& cfg() const { return *config; }
  std::filesystem::path out() const { return config->output_dir; }
};

/// Artifact layout for one lung setting under <out>/settings/<id>/.
struct SettingPaths {
  SettingPaths(const std::filesystem::path& out, const std::string& id);

  std::filesystem::path dir;
  std::filesystem::path dataset(const Waveform& wf) const;
  std::filesystem::path grid_csv() const { return dir / "pid_grid.csv"; }
  std::filesystem::path best_pid() const { return dir / "pid_best.json"; }
  std::filesystem::path simulator() const { return dir / "simulator.json"; }
  std::filesystem::path open_loop_csv() const { return dir / "open_loop.csv"; }
  std::filesystem::path sim_eval() const { return dir / "sim_eval.json"; }
  std::filesystem::path sweep_csv() const { return dir / "controller_sweep.csv"; }
  std::filesystem::path training_csv() const { return dir / "controller_training.csv"; }
  std::filesystem::path policy() const { return dir / "policy.json"; }
  std::filesystem::path score() const { return dir / "score.json"; }
};

struct PidChoice {
  PidCoefficients pid;
  double score = 0.0;
  std::vector<double> per_waveform;
};

struct SimulatorEvaluation {
  std::string setting_id;
  double mae = 0.0;
  double reference_mae = 0.0;  // NaN when no reference exists
  DistanceEstimate distance;
  std::size_t train_episodes = 0;
  std::size_t heldout_episodes = 0;
};

struct LambdaTrial {
  double lambda = 0.0;
  bool diverged = false;
  double score_before = 0.0;
  double score_after = 0.0;
  std::vector<double> epoch_losses;
};

struct ControllerChoice {
  ControllerPolicy policy;
  double simulator_score = 0.0;
  std::vector<LambdaTrial> trials;
};

struct PerformanceRow {
  std::string setting_id;
  PidCoefficients pid;
  double pid_score = 0.0;
  double lambda = 0.0;
  double learned_score = 0.0;
  double improvement = 0.0;  // (pid - learned) / pid
  std::vector<double> pid_per_waveform;
  std::vector<double> learned_per_waveform;
};

struct RobustnessResult {
  std::vector<std::string> settings;
  PidCoefficients pid;
  double lambda = 0.0;
  std::vector<double> pid_scores;
  std::vector<double> learned_scores;
  double pid_mean = 0.0;
  double learned_mean = 0.0;
};

struct SampleEfficiencyResult {
  std::string setting_id;
  TrainRun analytic;
  TrainRun reinforce;
  double final_score = 0.0;
  double threshold = 0.0;
  std::size_t analytic_episodes = 0;   // first episode within tolerance
  std::size_t reinforce_episodes = 0;  // SIZE_MAX when never reached
  std::size_t reinforce_cap = 0;
};

struct TransferRow {
  std::string setting_id;
  double pid_score = 0.0;
  double learned_score = 0.0;
};

struct ResultBundle {
  std::string config_hash;
  std::uint64_t seed = 0;
  std::vector<SimulatorEvaluation> simulators;
  std::vector<PerformanceRow> performance;
  std::optional<RobustnessResult> robustness;
  std::optional<SampleEfficiencyResult> sample_efficiency;
  std::vector<TransferRow> transfer;
};

/// Ground-truth plant for a setting, with its noise stream derived from the
/// experiment seed.
Plant make_plant(const ExperimentConfig& cfg, const SettingConfig& setting,
                 PlantModel model = PlantModel::kRc);

// Per-setting stages, in pipeline order.
void stage_collect(const RunContext& ctx, const SettingConfig& setting);
PidChoice stage_tune_pid(const RunContext& ctx, const SettingConfig& setting);
void stage_train_sim(const RunContext& ctx, const SettingConfig& setting);
SimulatorEvaluation stage_eval_sim(const RunContext& ctx, const SettingConfig& setting);
ControllerChoice stage_train_ctrl(const RunContext& ctx, const SettingConfig& setting);
PerformanceRow stage_score(const RunContext& ctx, const SettingConfig& setting);

/// Loaders used by later stages; throw StageFailed when the artifact is
/// missing or was produced under a different config hash.
std::vector<Episode> load_setting_episodes(const RunContext& ctx, const SettingConfig& setting);
SimulatorModel load_setting_simulator(const RunContext& ctx, const SettingConfig& setting);
PidChoice load_setting_pid(const RunContext& ctx, const SettingConfig& setting);
ControllerPolicy load_setting_policy(const RunContext& ctx, const SettingConfig& setting);

/// Runs fn(index, setting) for every setting with up to ctx.jobs threads.
/// The first failure in settings order is rethrown as StageFailed naming
/// the stage and setting.
void for_each_setting(const RunContext& ctx, const std::string& stage,
                      const std::function<void(std::size_t, const SettingConfig&)>& fn);

/// collect, tune-pid, train-sim, eval-sim, train-ctrl, score for every
/// setting, then the summary tables.
ResultBundle run_performance_experiment(const RunContext& ctx);
/// Needs every robustness setting's simulator on disk.
RobustnessResult run_robustness_experiment(const RunContext& ctx);
/// Needs the chosen setting's simulator on disk.
SampleEfficiencyResult run_sample_efficiency_experiment(const RunContext& ctx);
std::vector<TransferRow> run_transfer_experiment(const RunContext& ctx);

/// Everything above plus the manifest.
ResultBundle run_benchmark(const RunContext& ctx);

void write_performance_csv(std::ostream& os, const ResultBundle& bundle);
void write_simulator_csv(std::ostream& os, const ResultBundle& bundle);

}  // namespace ventctl
