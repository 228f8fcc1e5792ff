#include "ventctl/bench.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <limits>
#include <mutex>
#include <sstream>
#include <thread>

#include "ventctl/errors.hpp"
#include "ventctl/score.hpp"
#include "ventctl/svg.hpp"
#include "ventctl/trajectory_io.hpp"

namespace ventctl {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::size_t kNever = static_cast<std::size_t>(-1);

std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// Progress messages only; artifacts use fmt.
std::string brief(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

double number_from(const json& j) {
  return j.is_null() ? std::numeric_limits<double>::infinity() : j.get<double>();
}

void write_text(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw StageFailed("cannot write " + path.string());
    out << text;
    if (!out) throw StageFailed("failed writing " + path.string());
  }
  fs::rename(tmp, path);
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

json stamp(const RunContext& ctx) {
  return json{{"config_hash", ctx.cfg().hash()}, {"seed", ctx.cfg().seed}};
}

json read_artifact(const RunContext& ctx, const fs::path& path, const char* producer) {
  if (!fs::exists(path)) {
    throw StageFailed("missing artifact " + path.string() + "; run `" + producer + "` first");
  }
  std::ifstream in(path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw StageFailed("corrupt artifact " + path.string() + ": " + e.what());
  }
  if (j.value("config_hash", std::string{}) != ctx.cfg().hash()) {
    throw StageFailed("artifact " + path.string() + " was produced by a different config; rerun `" +
                      producer + "`");
  }
  return j;
}

void log(const RunContext& ctx, const std::string& msg) {
  static std::mutex mu;
  if (!ctx.log) return;
  std::lock_guard lock(mu);
  *ctx.log << msg << '\n' << std::flush;
}

json pid_json(const PidCoefficients& c) {
  return json{{"kp", c.kp}, {"ki", c.ki}, {"kd", c.kd}};
}

PidCoefficients pid_from(const json& j) {
  return PidCoefficients{j.at("kp").get<double>(), j.at("ki").get<double>(),
                         j.at("kd").get<double>(), kUnboundedWindow};
}

GridOptions grid_options(const ExperimentConfig& cfg) {
  GridOptions g;
  g.breaths = cfg.score_breaths;
  return g;
}

ScoreOptions score_options(const ExperimentConfig& cfg) {
  ScoreOptions s;
  s.breaths = cfg.score_breaths;
  return s;
}

ScoreBreakdown score_pid(const ExperimentConfig& cfg, const Plant& plant,
                         const PidCoefficients& pid) {
  const auto wfs = cfg.waveforms();
  return score_controller_detailed([pid] { return std::make_unique<PidController>(pid); },
                                   plant, wfs, score_options(cfg));
}

ScoreBreakdown score_policy(const ExperimentConfig& cfg, const Plant& plant,
                            const ControllerPolicy& policy) {
  const auto wfs = cfg.waveforms();
  return score_controller_detailed(
      [&policy] { return std::make_unique<ResidualController>(policy); }, plant, wfs,
      score_options(cfg));
}

EpisodeSplit split_for(const RunContext& ctx, const SettingConfig& setting) {
  const std::vector<Episode> episodes = load_setting_episodes(ctx, setting);
  Rng rng = derive_rng(ctx.cfg().seed, "split", setting.id());
  return split_episodes(episodes, rng, ctx.cfg().heldout_fraction);
}

ControllerPolicy initial_policy(const ExperimentConfig& cfg, const PidCoefficients& pid,
                                double lambda) {
  Rng rng = derive_rng(cfg.seed, "controller-init");
  const ControllerConfig& cc = cfg.controller;
  ControllerPolicy policy = ControllerPolicy::make(pid, lambda, rng, cc.features, cc.depth, cc.width);
  policy.output_gain = cc.output_gain;
  return policy;
}

// Trains one policy per lambda and keeps the best simulator score; plant
// scores are never consulted here.
ControllerChoice sweep_lambdas(const ExperimentConfig& cfg, const PidCoefficients& pid,
                               std::span<const SimulatorModel* const> sims) {
  const auto wfs = cfg.waveforms();
  ControllerChoice choice;
  bool have = false;
  for (double lambda : cfg.controller.lambdas) {
    ControllerPolicy policy = initial_policy(cfg, pid, lambda);
    LambdaTrial trial;
    trial.lambda = lambda;
    trial.score_before = simulator_score(policy, sims, wfs);
    try {
      trial.epoch_losses = train_analytic(policy, sims, wfs, cfg.controller.training).epoch_losses;
      trial.score_after = simulator_score(policy, sims, wfs);
    } catch (const DivergentLoss&) {
      trial.diverged = true;
      trial.score_after = std::numeric_limits<double>::infinity();
    }
    if (!trial.diverged && (!have || trial.score_after < choice.simulator_score)) {
      choice.policy = std::move(policy);
      choice.simulator_score = trial.score_after;
      have = true;
    }
    choice.trials.push_back(std::move(trial));
  }
  if (!have) {
    choice.policy = initial_policy(cfg, pid, 0.0);
    choice.simulator_score = simulator_score(choice.policy, sims, wfs);
  }
  return choice;
}

std::string sweep_csv(const RunContext& ctx, const ControllerChoice& choice) {
  std::ostringstream os;
  os << "lambda,status,simulator_score_before,simulator_score_after,selected,config_hash,seed\n";
  for (const LambdaTrial& t : choice.trials) {
    const bool selected = !t.diverged && t.lambda == choice.policy.lambda;
    os << fmt(t.lambda) << ',' << (t.diverged ? "diverged" : "ok") << ',' << fmt(t.score_before)
       << ',' << fmt(t.score_after) << ',' << (selected ? 1 : 0) << ',' << ctx.cfg().hash() << ','
       << ctx.cfg().seed << '\n';
  }
  return os.str();
}

std::string training_csv(const ControllerChoice& choice) {
  std::ostringstream os;
  os << "lambda,epoch,mean_episode_loss\n";
  for (const LambdaTrial& t : choice.trials) {
    for (std::size_t e = 0; e < t.epoch_losses.size(); ++e) {
      os << fmt(t.lambda) << ',' << e << ',' << fmt(t.epoch_losses[e]) << '\n';
    }
  }
  return os.str();
}

std::string curve_csv(const TrainRun& run) {
  std::ostringstream os;
  write_curve_csv(os, run);
  return os.str();
}

std::string chart(const ChartSpec& spec, const std::vector<Series>& series) {
  std::ostringstream os;
  write_line_chart(os, spec, series);
  return os.str();
}

Series pressure_series(const std::string& name, const Trajectory& traj) {
  Series s{name, {}, {}};
  for (const Sample& sample : traj.samples) {
    s.x.push_back(sample.t);
    s.y.push_back(sample.p);
  }
  return s;
}

void plot_setting(const RunContext& ctx, const SettingConfig& setting, const PidCoefficients& pid,
                  const ControllerPolicy& policy) {
  const ExperimentConfig& cfg = ctx.cfg();
  const Waveform wf = cfg.waveforms().back();
  const auto run = [&](Controller& c) {
    Plant plant = make_plant(cfg, setting);
    try {
      return run_breath(plant, c, wf, cfg.score_breaths);
    } catch (const SafetyAbort&) {
      return Trajectory{};
    }
  };
  PidController pid_ctrl(pid);
  ResidualController learned(policy);
  Series target{"target", {}, {}};
  const std::size_t n = cfg.score_breaths * wf.steps_per_breath();
  for (std::size_t k = 0; k < n; ++k) {
    const double t = static_cast<double>(k) * wf.dt;
    target.x.push_back(t);
    target.y.push_back(waveform_target(t, wf));
  }
  const std::vector<Series> series{target, pressure_series("PID", run(pid_ctrl)),
                                   pressure_series("learned", run(learned))};
  const SettingPaths paths(ctx.out(), setting.id());
  write_text(paths.dir / "trajectory.svg",
             chart({setting.id() + " " + wf.id(), "time (s)", "pressure (cmH2O)"}, series));
}

}  // namespace

SettingPaths::SettingPaths(const fs::path& out, const std::string& id)
    : dir(out / "settings" / id) {}

fs::path SettingPaths::dataset(const Waveform& wf) const {
  return dir / ("dataset_" + wf.id() + ".jsonl");
}

Plant make_plant(const ExperimentConfig& cfg, const SettingConfig& setting, PlantModel model) {
  PlantOptions options = cfg.plant;
  options.model = model;
  options.seed = derive_rng(cfg.seed, "noise", setting.id())();
  return Plant(setting.lung, options);
}

void for_each_setting(const RunContext& ctx, const std::string& stage,
                      const std::function<void(std::size_t, const SettingConfig&)>& fn) {
  const auto& settings = ctx.cfg().settings;
  std::vector<std::exception_ptr> errors(settings.size());
  const auto work = [&](std::size_t i) {
    try {
      fn(i, settings[i]);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  };
  const std::size_t jobs = std::clamp<std::size_t>(ctx.jobs, 1, std::max<std::size_t>(1, settings.size()));
  if (jobs == 1) {
    for (std::size_t i = 0; i < settings.size(); ++i) work(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> workers;
    for (std::size_t w = 0; w < jobs; ++w) {
      workers.emplace_back([&] {
        for (std::size_t i = next++; i < settings.size(); i = next++) work(i);
      });
    }
  }
  for (std::size_t i = 0; i < settings.size(); ++i) {
    if (!errors[i]) continue;
    try {
      std::rethrow_exception(errors[i]);
    } catch (const StageFailed&) {
      throw;
    } catch (const std::exception& e) {
      throw StageFailed("stage " + stage + ", setting " + settings[i].id() + ": " + e.what());
    }
  }
}

void stage_collect(const RunContext& ctx, const SettingConfig& setting) {
  const ExperimentConfig& cfg = ctx.cfg();
  const SettingPaths paths(ctx.out(), setting.id());
  CollectOptions options;
  options.context_length = cfg.context_length;
  std::size_t aborted = 0;
  for (const Waveform& wf : cfg.waveforms()) {
    Plant plant = make_plant(cfg, setting);
    Rng rng = derive_rng(cfg.seed, "collect", setting.id() + "/" + wf.id());
    const Dataset data =
        collect_dataset(plant, setting.exploration, wf, cfg.breaths_per_waveform, rng, options);
    if (data.trajectory.empty()) {
      throw DegenerateData("every exploration breath for " + wf.id() + " hit the safety ceiling");
    }
    aborted += data.aborted.size();
    json extra = stamp(ctx);
    extra["exploration"] = to_json(setting.exploration);
    extra["collection"] = data.metadata();
    fs::create_directories(paths.dir);
    const fs::path tmp = paths.dataset(wf).string() + ".tmp";
    save_trajectory(tmp, data.trajectory, setting.lung, wf, extra);
    fs::rename(tmp, paths.dataset(wf));
  }
  log(ctx, "collect " + setting.id() + ": " + std::to_string(cfg.waveforms().size()) +
               " waveforms, " + std::to_string(aborted) + " aborted breaths");
}

std::vector<Episode> load_setting_episodes(const RunContext& ctx, const SettingConfig& setting) {
  const SettingPaths paths(ctx.out(), setting.id());
  std::vector<Episode> episodes;
  for (const Waveform& wf : ctx.cfg().waveforms()) {
    const fs::path path = paths.dataset(wf);
    if (!fs::exists(path)) {
      throw StageFailed("missing artifact " + path.string() + "; run `collect` first");
    }
    const LoadedTrajectory loaded = load_trajectory(path);
    if (loaded.header.value("config_hash", std::string{}) != ctx.cfg().hash()) {
      throw StageFailed("artifact " + path.string() +
                        " was produced by a different config; rerun `collect`");
    }
    std::vector<Episode> eps = episode_split(loaded.trajectory, ctx.cfg().context_length);
    episodes.insert(episodes.end(), std::make_move_iterator(eps.begin()),
                    std::make_move_iterator(eps.end()));
  }
  return episodes;
}

PidChoice stage_tune_pid(const RunContext& ctx, const SettingConfig& setting) {
  const ExperimentConfig& cfg = ctx.cfg();
  const auto wfs = cfg.waveforms();
  const Plant plant = make_plant(cfg, setting);
  const GridResult grid =
      grid_search([&plant] { return plant; }, cfg.grid, wfs, grid_options(cfg));
  const SettingPaths paths(ctx.out(), setting.id());
  std::ostringstream csv;
  write_grid_csv(csv, grid, wfs);
  write_text(paths.grid_csv(), csv.str());
  PidChoice choice;
  choice.pid = grid.best;
  choice.score = grid.best_score;
  for (const GridRow& row : grid.table) {
    if (row.coefficients == grid.best) choice.per_waveform = row.waveform_scores;
  }
  json j = stamp(ctx);
  j["setting"] = setting.id();
  j["pid"] = pid_json(choice.pid);
  j["score"] = number_or_null(choice.score);
  json per = json::array();
  for (double s : choice.per_waveform) per.push_back(number_or_null(s));
  j["per_waveform"] = per;
  write_json(paths.best_pid(), j);
  log(ctx, "tune-pid " + setting.id() + ": best (" + brief(choice.pid.kp) + ", " +
               brief(choice.pid.ki) + ", " + brief(choice.pid.kd) + ") score " + brief(choice.score));
  return choice;
}

PidChoice load_setting_pid(const RunContext& ctx, const SettingConfig& setting) {
  const json j = read_artifact(ctx, SettingPaths(ctx.out(), setting.id()).best_pid(), "tune-pid");
  PidChoice c;
  c.pid = pid_from(j.at("pid"));
  c.score = number_from(j.at("score"));
  for (const json& s : j.at("per_waveform")) c.per_waveform.push_back(number_from(s));
  return c;
}

void stage_train_sim(const RunContext& ctx, const SettingConfig& setting) {
  const EpisodeSplit split = split_for(ctx, setting);
  Rng rng = derive_rng(ctx.cfg().seed, "train-sim", setting.id());
  SimTrainReport report;
  const SimulatorModel model = train_simulator(split.train, setting.architecture,
                                               ctx.cfg().simulator, rng, setting.id(), &report);
  json j = stamp(ctx);
  j["setting"] = setting.id();
  j["architecture"] = {{"depth", setting.architecture.depth},
                       {"width", setting.architecture.width},
                       {"H_p", setting.architecture.features.pressure_history},
                       {"H_c", setting.architecture.features.control_history},
                       {"N_B", setting.architecture.boundary_models}};
  j["train_episodes"] = split.train.size();
  j["heldout_episodes"] = split.heldout.size();
  json final_losses = json::array();
  for (const auto& curve : report.epoch_losses) {
    final_losses.push_back(curve.empty() ? json(nullptr) : json(curve.back()));
  }
  j["final_training_loss"] = final_losses;
  j["model"] = to_json(model);
  write_json(SettingPaths(ctx.out(), setting.id()).simulator(), j);
  log(ctx, "train-sim " + setting.id() + ": " + std::to_string(split.train.size()) +
               " training episodes");
}

SimulatorModel load_setting_simulator(const RunContext& ctx, const SettingConfig& setting) {
  const json j =
      read_artifact(ctx, SettingPaths(ctx.out(), setting.id()).simulator(), "train-sim");
  return simulator_from_json(j.at("model"));
}

SimulatorEvaluation stage_eval_sim(const RunContext& ctx, const SettingConfig& setting) {
  const ExperimentConfig& cfg = ctx.cfg();
  const EpisodeSplit split = split_for(ctx, setting);
  auto model = std::make_shared<const SimulatorModel>(load_setting_simulator(ctx, setting));
  const OpenLoopReport report = open_loop_mae(*model, split.heldout);

  SimulatorEvaluation ev;
  ev.setting_id = setting.id();
  ev.mae = report.mae;
  try {
    ev.reference_mae = reference_open_loop_mae(setting.lung.resistance, setting.lung.compliance);
  } catch (const ConfigInvalid&) {
    ev.reference_mae = std::numeric_limits<double>::quiet_NaN();
  }
  ev.train_episodes = split.train.size();
  ev.heldout_episodes = split.heldout.size();

  Plant plant = make_plant(cfg, setting);
  PlantSystem truth(plant);
  SimulatorSystem learned(model, plant.state().pressure);
  Rng rng = derive_rng(cfg.seed, "distance", setting.id());
  ev.distance = open_loop_distance(truth, learned, recorded_control_sampler(split.heldout),
                                   cfg.distance.horizon, cfg.distance.samples, rng);

  const SettingPaths paths(ctx.out(), setting.id());
  std::ostringstream csv;
  write_open_loop_csv(csv, report);
  write_text(paths.open_loop_csv(), csv.str());
  json j = stamp(ctx);
  j["setting"] = setting.id();
  j["heldout_mae"] = ev.mae;
  j["reference_mae"] = number_or_null(ev.reference_mae);
  j["train_episodes"] = ev.train_episodes;
  j["heldout_episodes"] = ev.heldout_episodes;
  j["open_loop_distance"] = {{"horizon", cfg.distance.horizon},
                             {"samples", ev.distance.samples},
                             {"mean", ev.distance.mean},
                             {"std_error", ev.distance.std_error},
                             {"per_step", ev.distance.per_step}};
  write_json(paths.sim_eval(), j);
  if (ctx.plot) {
    Series s{"held-out |p_sim - p|", {}, {}};
    for (std::size_t k = 0; k < report.per_step.size(); ++k) {
      s.x.push_back(static_cast<double>(k + 1));
      s.y.push_back(report.per_step[k]);
    }
    Series d{"open-loop distance", {}, {}};
    for (std::size_t k = 0; k < ev.distance.per_step.size(); ++k) {
      d.x.push_back(static_cast<double>(k + 1));
      d.y.push_back(ev.distance.per_step[k]);
    }
    write_text(paths.dir / "open_loop.svg",
               chart({setting.id() + " open-loop error", "step", "cmH2O"}, {s, d}));
  }
  log(ctx, "eval-sim " + setting.id() + ": held-out MAE " + brief(ev.mae));
  return ev;
}

ControllerChoice stage_train_ctrl(const RunContext& ctx, const SettingConfig& setting) {
  const SimulatorModel sim = load_setting_simulator(ctx, setting);
  const PidChoice pid = load_setting_pid(ctx, setting);
  const SimulatorModel* sims[] = {&sim};
  ControllerChoice choice = sweep_lambdas(ctx.cfg(), pid.pid, sims);
  const SettingPaths paths(ctx.out(), setting.id());
  write_text(paths.sweep_csv(), sweep_csv(ctx, choice));
  write_text(paths.training_csv(), training_csv(choice));
  json j = stamp(ctx);
  j["setting"] = setting.id();
  j["simulator_score"] = choice.simulator_score;
  j["policy"] = to_json(choice.policy);
  write_json(paths.policy(), j);
  log(ctx, "train-ctrl " + setting.id() + ": lambda " + brief(choice.policy.lambda) +
               ", simulator score " + brief(choice.simulator_score));
  return choice;
}

ControllerPolicy load_setting_policy(const RunContext& ctx, const SettingConfig& setting) {
  const json j = read_artifact(ctx, SettingPaths(ctx.out(), setting.id()).policy(), "train-ctrl");
  return policy_from_json(j.at("policy"));
}

PerformanceRow stage_score(const RunContext& ctx, const SettingConfig& setting) {
  const ExperimentConfig& cfg = ctx.cfg();
  const PidChoice pid = load_setting_pid(ctx, setting);
  const ControllerPolicy policy = load_setting_policy(ctx, setting);
  const Plant plant = make_plant(cfg, setting);
  const ScoreBreakdown p = score_pid(cfg, plant, pid.pid);
  const ScoreBreakdown l = score_policy(cfg, plant, policy);
  PerformanceRow row;
  row.setting_id = setting.id();
  row.pid = pid.pid;
  row.pid_score = p.mean;
  row.lambda = policy.lambda;
  row.learned_score = l.mean;
  row.improvement = (p.mean - l.mean) / p.mean;
  row.pid_per_waveform = p.per_waveform;
  row.learned_per_waveform = l.per_waveform;

  json j = stamp(ctx);
  j["setting"] = setting.id();
  j["pid"] = pid_json(row.pid);
  j["pid_score"] = number_or_null(row.pid_score);
  j["lambda"] = row.lambda;
  j["learned_score"] = number_or_null(row.learned_score);
  j["improvement"] = number_or_null(row.improvement);
  json wf = json::array();
  const auto wfs = cfg.waveforms();
  for (std::size_t i = 0; i < wfs.size(); ++i) {
    wf.push_back({{"waveform", wfs[i].id()},
                  {"pid", number_or_null(p.per_waveform[i])},
                  {"learned", number_or_null(l.per_waveform[i])}});
  }
  j["per_waveform"] = wf;
  write_json(SettingPaths(ctx.out(), setting.id()).score(), j);
  if (ctx.plot) plot_setting(ctx, setting, pid.pid, policy);
  log(ctx, "score " + setting.id() + ": PID " + brief(row.pid_score) + ", learned " +
               brief(row.learned_score));
  return row;
}

void write_performance_csv(std::ostream& os, const ResultBundle& bundle) {
  os << "setting,kp,ki,kd,pid_score,lambda,learned_score,improvement,config_hash,seed\n";
  for (const PerformanceRow& r : bundle.performance) {
    os << r.setting_id << ',' << fmt(r.pid.kp) << ',' << fmt(r.pid.ki) << ',' << fmt(r.pid.kd)
       << ',' << fmt(r.pid_score) << ',' << fmt(r.lambda) << ',' << fmt(r.learned_score) << ','
       << fmt(r.improvement) << ',' << bundle.config_hash << ',' << bundle.seed << '\n';
  }
}

void write_simulator_csv(std::ostream& os, const ResultBundle& bundle) {
  os << "setting,heldout_mae,reference_mae,distance_mean,distance_std_error,train_episodes,"
        "heldout_episodes,config_hash,seed\n";
  for (const SimulatorEvaluation& s : bundle.simulators) {
    os << s.setting_id << ',' << fmt(s.mae) << ',' << fmt(s.reference_mae) << ','
       << fmt(s.distance.mean) << ',' << fmt(s.distance.std_error) << ',' << s.train_episodes
       << ',' << s.heldout_episodes << ',' << bundle.config_hash << ',' << bundle.seed << '\n';
  }
}

ResultBundle run_performance_experiment(const RunContext& ctx) {
  const ExperimentConfig& cfg = ctx.cfg();
  ResultBundle bundle;
  bundle.config_hash = cfg.hash();
  bundle.seed = cfg.seed;
  bundle.simulators.resize(cfg.settings.size());
  bundle.performance.resize(cfg.settings.size());
  for_each_setting(ctx, "performance", [&](std::size_t i, const SettingConfig& s) {
    stage_collect(ctx, s);
    stage_tune_pid(ctx, s);
    stage_train_sim(ctx, s);
    bundle.simulators[i] = stage_eval_sim(ctx, s);
    stage_train_ctrl(ctx, s);
    bundle.performance[i] = stage_score(ctx, s);
  });
  std::ostringstream perf, sims;
  write_performance_csv(perf, bundle);
  write_simulator_csv(sims, bundle);
  write_text(ctx.out() / "performance.csv", perf.str());
  write_text(ctx.out() / "simulators.csv", sims.str());
  return bundle;
}

RobustnessResult run_robustness_experiment(const RunContext& ctx) {
  const ExperimentConfig& cfg = ctx.cfg();
  std::vector<const SettingConfig*> settings;
  if (cfg.robustness_settings.empty()) {
    for (const SettingConfig& s : cfg.settings) settings.push_back(&s);
  } else {
    for (const std::string& id : cfg.robustness_settings) {
      const auto it = std::find_if(cfg.settings.begin(), cfg.settings.end(),
                                   [&](const SettingConfig& s) { return s.id() == id; });
      if (it != cfg.settings.end()) settings.push_back(&*it);
    }
  }
  if (settings.empty()) throw StageFailed("robustness: no settings selected");
  const auto wfs = cfg.waveforms();

  RobustnessResult result;
  std::vector<SimulatorModel> models;
  std::vector<Plant> plants;
  std::vector<GridRow> mean_table;
  for (const SettingConfig* s : settings) {
    result.settings.push_back(s->id());
    try {
      models.push_back(load_setting_simulator(ctx, *s));
    } catch (const StageFailed& e) {
      throw StageFailed(std::string("robustness: ") + e.what());
    }
    plants.push_back(make_plant(cfg, *s));
    const Plant& plant = plants.back();
    const GridResult grid =
        grid_search([&plant] { return plant; }, cfg.grid, wfs, grid_options(cfg));
    if (mean_table.empty()) {
      mean_table = grid.table;
      for (GridRow& row : mean_table) row.mean_score = 0.0;
    }
    for (std::size_t k = 0; k < grid.table.size(); ++k) {
      mean_table[k].mean_score += grid.table[k].mean_score / static_cast<double>(settings.size());
    }
  }
  result.pid = mean_table[best_row(mean_table)].coefficients;

  std::vector<const SimulatorModel*> sims;
  for (const SimulatorModel& m : models) sims.push_back(&m);
  const ControllerChoice choice = sweep_lambdas(cfg, result.pid, sims);
  result.lambda = choice.policy.lambda;
  for (const Plant& plant : plants) {
    result.pid_scores.push_back(score_pid(cfg, plant, result.pid).mean);
    result.learned_scores.push_back(score_policy(cfg, plant, choice.policy).mean);
  }
  const auto mean = [](const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
  };
  result.pid_mean = mean(result.pid_scores);
  result.learned_mean = mean(result.learned_scores);

  const fs::path dir = ctx.out() / "robustness";
  std::ostringstream grid_csv;
  grid_csv << "kp,ki,kd,mean_score\n";
  for (const GridRow& row : mean_table) {
    grid_csv << fmt(row.coefficients.kp) << ',' << fmt(row.coefficients.ki) << ','
             << fmt(row.coefficients.kd) << ',' << fmt(row.mean_score) << '\n';
  }
  write_text(dir / "pid_grid_mean.csv", grid_csv.str());
  write_text(dir / "controller_sweep.csv", sweep_csv(ctx, choice));
  write_text(dir / "controller_training.csv", training_csv(choice));
  json pj = stamp(ctx);
  pj["settings"] = result.settings;
  pj["simulator_score"] = choice.simulator_score;
  pj["policy"] = to_json(choice.policy);
  write_json(dir / "policy.json", pj);
  std::ostringstream scores;
  scores << "setting,pid_score,learned_score,config_hash,seed\n";
  for (std::size_t i = 0; i < result.settings.size(); ++i) {
    scores << result.settings[i] << ',' << fmt(result.pid_scores[i]) << ','
           << fmt(result.learned_scores[i]) << ',' << cfg.hash() << ',' << cfg.seed << '\n';
  }
  write_text(dir / "scores.csv", scores.str());
  std::ostringstream summary;
  summary << "settings,kp,ki,kd,pid_mean,lambda,learned_mean,improvement,config_hash,seed\n";
  std::string joined;
  for (const std::string& id : result.settings) joined += (joined.empty() ? "" : ";") + id;
  summary << joined << ',' << fmt(result.pid.kp) << ',' << fmt(result.pid.ki) << ','
          << fmt(result.pid.kd) << ',' << fmt(result.pid_mean) << ',' << fmt(result.lambda) << ','
          << fmt(result.learned_mean) << ','
          << fmt((result.pid_mean - result.learned_mean) / result.pid_mean) << ',' << cfg.hash()
          << ',' << cfg.seed << '\n';
  write_text(ctx.out() / "robustness.csv", summary.str());
  log(ctx, "robustness: PID " + brief(result.pid_mean) + ", learned " + brief(result.learned_mean));
  return result;
}

SampleEfficiencyResult run_sample_efficiency_experiment(const RunContext& ctx) {
  const ExperimentConfig& cfg = ctx.cfg();
  const SampleEfficiencyConfig& se = cfg.sample_efficiency;
  const SettingConfig& setting = cfg.setting(se.setting_id);
  const SimulatorModel sim = load_setting_simulator(ctx, setting);
  const SimulatorModel* sims[] = {&sim};
  const auto wfs = cfg.waveforms();

  SampleEfficiencyResult result;
  result.setting_id = setting.id();
  ControllerPolicy analytic = initial_policy(cfg, se.base, se.lambda);
  AnalyticTraining hyper = cfg.controller.training;
  hyper.epochs = se.epochs;
  hyper.score_each_epoch = true;
  result.analytic = train_analytic(analytic, sims, wfs, hyper);
  result.final_score = result.analytic.scores.empty()
                           ? std::numeric_limits<double>::quiet_NaN()
                           : result.analytic.scores.back().second;
  result.threshold = (1.0 + se.tolerance) * result.final_score;
  result.analytic_episodes = episodes_to_reach(result.analytic, result.threshold);

  ControllerPolicy baseline = initial_policy(cfg, se.base, se.lambda);
  ReinforceTraining rh = se.reinforce;
  rh.stop_at = result.threshold;
  Rng rng = derive_rng(cfg.seed, "reinforce", setting.id());
  result.reinforce = train_reinforce_baseline(baseline, sim, wfs, rh, rng);
  result.reinforce_episodes = episodes_to_reach(result.reinforce, result.threshold);
  result.reinforce_cap = rh.episodes;

  const fs::path dir = ctx.out() / "sample_efficiency";
  write_text(dir / "analytic.csv", curve_csv(result.analytic));
  write_text(dir / "reinforce.csv", curve_csv(result.reinforce));
  json j = stamp(ctx);
  j["setting"] = setting.id();
  j["base_pid"] = pid_json(se.base);
  j["lambda"] = se.lambda;
  j["final_score"] = number_or_null(result.final_score);
  j["threshold"] = number_or_null(result.threshold);
  j["analytic_episodes"] =
      result.analytic_episodes == kNever ? json(nullptr) : json(result.analytic_episodes);
  j["reinforce_episodes"] =
      result.reinforce_episodes == kNever ? json(nullptr) : json(result.reinforce_episodes);
  j["reinforce_cap"] = result.reinforce_cap;
  write_json(dir / "summary.json", j);
  if (ctx.plot) {
    const auto series = [](const std::string& name, const TrainRun& run) {
      Series s{name, {}, {}};
      for (const auto& [e, score] : run.scores) {
        s.x.push_back(static_cast<double>(e));
        s.y.push_back(score);
      }
      return s;
    };
    write_text(dir / "curves.svg",
               chart({"sample efficiency " + setting.id(), "episodes", "simulator score"},
                     {series("analytic", result.analytic), series("REINFORCE", result.reinforce)}));
  }
  log(ctx, "sample-efficiency: analytic " + std::to_string(result.analytic_episodes) +
               " episodes, REINFORCE " +
               (result.reinforce_episodes == kNever ? std::string("not reached")
                                                    : std::to_string(result.reinforce_episodes)));
  return result;
}

std::vector<TransferRow> run_transfer_experiment(const RunContext& ctx) {
  const ExperimentConfig& cfg = ctx.cfg();
  std::vector<TransferRow> rows(cfg.settings.size());
  for_each_setting(ctx, "transfer", [&](std::size_t i, const SettingConfig& s) {
    const Plant plant = make_plant(cfg, s, PlantModel::kBalloon);
    rows[i].setting_id = s.id();
    rows[i].pid_score = score_pid(cfg, plant, load_setting_pid(ctx, s).pid).mean;
    rows[i].learned_score = score_policy(cfg, plant, load_setting_policy(ctx, s)).mean;
  });
  std::ostringstream os;
  os << "setting,plant,pid_score,learned_score,config_hash,seed\n";
  for (const TransferRow& r : rows) {
    os << r.setting_id << ",balloon," << fmt(r.pid_score) << ',' << fmt(r.learned_score) << ','
       << cfg.hash() << ',' << cfg.seed << '\n';
  }
  write_text(ctx.out() / "transfer.csv", os.str());
  return rows;
}

ResultBundle run_benchmark(const RunContext& ctx) {
  const ExperimentConfig& cfg = ctx.cfg();
  fs::create_directories(ctx.out());
  json effective = cfg.document;
  effective.erase("output_dir");
  write_json(ctx.out() / "config.json", effective);

  ResultBundle bundle = run_performance_experiment(ctx);
  const auto present = [&](const std::string& id) {
    return std::any_of(cfg.settings.begin(), cfg.settings.end(),
                       [&](const SettingConfig& s) { return s.id() == id; });
  };
  // A --setting filter may drop the configured robustness or sample
  // efficiency settings; those experiments are then skipped.
  const bool robustness_present =
      cfg.robustness_settings.empty() ||
      std::any_of(cfg.robustness_settings.begin(), cfg.robustness_settings.end(), present);
  if (robustness_present) bundle.robustness = run_robustness_experiment(ctx);
  const bool se_present = present(cfg.sample_efficiency.setting_id);
  if (cfg.sample_efficiency.enabled && se_present) {
    bundle.sample_efficiency = run_sample_efficiency_experiment(ctx);
  }
  if (cfg.balloon_transfer) bundle.transfer = run_transfer_experiment(ctx);

  std::vector<std::string> files;
  for (const auto& entry : fs::recursive_directory_iterator(ctx.out())) {
    if (!entry.is_regular_file()) continue;
    const std::string rel = fs::relative(entry.path(), ctx.out()).generic_string();
    if (rel != "manifest.json") files.push_back(rel);
  }
  std::sort(files.begin(), files.end());
  json manifest = stamp(ctx);
  manifest["name"] = cfg.name;
  manifest["settings"] = json::array();
  for (const SettingConfig& s : cfg.settings) manifest["settings"].push_back(s.id());
  manifest["files"] = files;
  write_json(ctx.out() / "manifest.json", manifest);
  return bundle;
}

}  // namespace ventctl
