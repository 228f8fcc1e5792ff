#include "ventbench/cli.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ventctl/bench.hpp"
#include "ventctl/errors.hpp"

namespace ventbench {

namespace {

enum ExitCode : int {
  kOk = 0,
  kFailure = 1,
  kUsage = 2,
  kConfigInvalid = 3,
  kStageFailed = 4,
};

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::vector<std::string> settings;
  std::size_t jobs = 1;
  bool plot = false;
  bool quiet = false;
};

ventctl::ExperimentConfig resolve_config(const Options& opt) {
  if (opt.config.empty()) throw ventctl::ConfigInvalid("--config is required");
  ventctl::ExperimentConfig cfg = ventctl::load_experiment_config(opt.config);
  if (opt.seed) cfg.set_seed(*opt.seed);
  if (const char* env = std::getenv("VENTBENCH_OUT"); env && *env) cfg.set_output_dir(env);
  if (!opt.out.empty()) cfg.set_output_dir(opt.out);
  cfg.filter_settings(opt.settings);
  return cfg;
}

using Stage = std::function<void(const ventctl::RunContext&)>;

template <typename Fn>
Stage per_setting(const char* name, Fn fn) {
  return [name, fn](const ventctl::RunContext& ctx) {
    ventctl::for_each_setting(ctx, name, [&](std::size_t, const ventctl::SettingConfig& s) {
      fn(ctx, s);
    });
  };
}

void score_stage(const ventctl::RunContext& ctx) {
  ventctl::ResultBundle bundle;
  bundle.config_hash = ctx.cfg().hash();
  bundle.seed = ctx.cfg().seed;
  bundle.performance.resize(ctx.cfg().settings.size());
  ventctl::for_each_setting(ctx, "score", [&](std::size_t i, const ventctl::SettingConfig& s) {
    bundle.performance[i] = ventctl::stage_score(ctx, s);
  });
  std::ostringstream csv;
  ventctl::write_performance_csv(csv, bundle);
  std::filesystem::create_directories(ctx.out());
  std::ofstream(ctx.out() / "performance.csv", std::ios::binary) << csv.str();
}

}  // namespace

int parse_and_dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Desk-scale ventilator control benchmark"};
  app.name("ventbench");
  app.require_subcommand(1, 1);

  Options opt;
  Stage stage;
  const auto add = [&](const char* name, const char* help, Stage fn) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("--config", opt.config, "experiment config (JSON)")->required();
    sub->add_option("--seed", opt.seed, "override the config seed");
    sub->add_option("--out", opt.out, "output directory (overrides VENTBENCH_OUT and config)");
    sub->add_option("--setting", opt.settings, "restrict to a lung setting id, e.g. R5C50")
        ->take_all();
    sub->add_option("--jobs", opt.jobs, "parallel settings")->check(CLI::PositiveNumber);
    sub->add_flag("--plot", opt.plot, "also write SVG charts");
    sub->add_flag("-q,--quiet", opt.quiet, "suppress progress messages");
    sub->callback([&stage, fn] { stage = fn; });
  };

  using namespace ventctl;
  add("collect", "collect exploration datasets",
      per_setting("collect", [](const RunContext& c, const SettingConfig& s) { stage_collect(c, s); }));
  add("tune-pid", "grid-search the best PID per setting",
      per_setting("tune-pid", [](const RunContext& c, const SettingConfig& s) { stage_tune_pid(c, s); }));
  add("train-sim", "train the learned simulator",
      per_setting("train-sim", [](const RunContext& c, const SettingConfig& s) { stage_train_sim(c, s); }));
  add("eval-sim", "held-out open-loop evaluation of the simulator",
      per_setting("eval-sim", [](const RunContext& c, const SettingConfig& s) { stage_eval_sim(c, s); }));
  add("train-ctrl", "train the residual controller on the simulator",
      per_setting("train-ctrl", [](const RunContext& c, const SettingConfig& s) { stage_train_ctrl(c, s); }));
  add("score", "score PID and learned controllers on the plant", score_stage);
  add("benchmark", "run every stage and experiment",
      [](const RunContext& c) { run_benchmark(c); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e, out, err);
    err << "error[usage]: " << e.what() << "\n\n" << app.help();
    return kUsage;
  }

  try {
    const ExperimentConfig cfg = resolve_config(opt);
    RunContext ctx;
    ctx.config = &cfg;
    ctx.jobs = opt.jobs;
    ctx.plot = opt.plot;
    ctx.log = opt.quiet ? nullptr : &err;
    stage(ctx);
    return kOk;
  } catch (const ConfigInvalid& e) {
    err << "error[config-invalid]: " << e.what() << '\n';
    return kConfigInvalid;
  } catch (const StageFailed& e) {
    err << "error[stage-failed]: " << e.what() << '\n';
    return kStageFailed;
  } catch (const Error& e) {
    err << "error[stage-failed]: " << e.what() << '\n';
    return kStageFailed;
  } catch (const std::exception& e) {
    err << "error[internal]: " << e.what() << '\n';
    return kFailure;
  }
}

}  // namespace ventbench
