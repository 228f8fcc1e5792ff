#include "ventctl/policy.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ostream>

#include "ventctl/errors.hpp"

namespace ventctl {

using nlohmann::json;

namespace {

constexpr int kFormatVersion = 1;

struct StepRecord {
  double error = 0.0;
  bool clamp_active = true;  // summed control inside [0, u_max]
  Tape net_tape;
  SimStepTape sim_tape;
};

bool inside(double x, double u_max) { return x >= 0.0 && x <= u_max; }

}  // namespace

void FeatureConfig::validate() const {
  if (window < 1) throw ConfigInvalid("feature window must be >= 1");
  if (!(pressure_scale > 0.0)) throw ConfigInvalid("feature pressure scale must be positive");
}

std::vector<double> controller_features(std::span<const double> errors,
                                        std::span<const double> targets,
                                        const FeatureConfig& cfg) {
  std::vector<double> x(cfg.size(), 0.0);
  const auto fill = [&](std::span<const double> src, std::size_t offset) {
    const std::size_t n = std::min(src.size(), cfg.window);
    for (std::size_t k = 0; k < n; ++k) {
      x[offset + cfg.window - n + k] = src[src.size() - n + k] / cfg.pressure_scale;
    }
  };
  fill(errors, 0);
  fill(targets, cfg.window);
  return x;
}

ControllerPolicy ControllerPolicy::make(const PidCoefficients& pid, double lambda, Rng& rng,
                                        const FeatureConfig& features, std::size_t depth,
                                        std::size_t width) {
  features.validate();
  std::vector<std::size_t> widths{features.size()};
  for (std::size_t d = 0; d < depth; ++d) widths.push_back(width);
  widths.push_back(1);
  ControllerPolicy policy;
  policy.pid = pid;
  policy.correction = Mlp(widths, rng);
  policy.correction.zero_output_layer();
  policy.lambda = lambda;
  policy.features = features;
  policy.validate();
  return policy;
}

void ControllerPolicy::validate() const {
  pid.validate();
  features.validate();
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ConfigInvalid("lambda must be >= 0");
  if (!std::isfinite(output_gain)) throw ConfigInvalid("output gain must be finite");
  if (correction.input_size() != features.size() || correction.output_size() != 1) {
    throw ShapeMismatch("correction network does not match the feature layout");
  }
}

FeatureHistory::FeatureHistory(std::size_t window) : window_(window) {}

void FeatureHistory::reset() {
  errors_.clear();
  targets_.clear();
}

void FeatureHistory::push(double error, double target) {
  errors_.push_back(error);
  targets_.push_back(target);
  if (errors_.size() > window_) {
    errors_.pop_front();
    targets_.pop_front();
  }
}

std::vector<double> FeatureHistory::features(const FeatureConfig& cfg) const {
  const std::vector<double> e(errors_.begin(), errors_.end());
  const std::vector<double> t(targets_.begin(), targets_.end());
  return controller_features(e, t, cfg);
}

double residual_control(const ControllerPolicy& policy, double target, double measured,
                        PidState& pid_state, FeatureHistory& history, double u_max) {
  // The PID term enters unclamped so the correction keeps authority while
  // the PID alone would saturate.
  const double base = pid_raw(pid_state, target, measured, policy.pid);
  history.push(target - measured, target);
  if (policy.lambda == 0.0) return std::clamp(base, 0.0, u_max);
  const double net = policy.correction.forward_scalar(history.features(policy.features));
  return std::clamp(base + policy.lambda * policy.output_gain * net, 0.0, u_max);
}

ResidualController::ResidualController(ControllerPolicy policy, double u_max)
    : policy_(std::move(policy)),
      u_max_(u_max),
      pid_state_(policy_.pid.window),
      history_(policy_.features.window) {
  policy_.validate();
}

void ResidualController::begin_breath() {
  pid_state_.reset();
  history_.reset();
}

double ResidualController::act(double target, double measured, double) {
  return residual_control(policy_, target, measured, pid_state_, history_, u_max_);
}

std::size_t rollout_steps(const Waveform& wf) {
  const std::size_t n = wf.inspiratory_steps();
  return n > 0 ? n - 1 : 0;
}

ClosedLoopResult closed_loop_rollout(const ControllerPolicy& policy, const SimulatorModel& sim,
                                     const Waveform& wf, std::size_t steps,
                                     MlpGradients* grads, double u_max) {
  const std::size_t hp = sim.featurization().pressure_history;
  const std::size_t hc = sim.featurization().control_history;
  const double pip = wf.pip;
  const PidCoefficients& c = policy.pid;
  ClosedLoopResult out;
  if (steps == 0) return out;

  // p_t at P[hp - 1 + t]; u_t at U[hc - 1 + t].
  std::vector<double> P(hp, wf.peep);
  std::vector<double> U(hc - 1, 0.0);
  P.reserve(hp + steps);
  U.reserve(hc - 1 + steps);
  std::vector<StepRecord> rec(steps);
  PidState pid_state(c.window);
  FeatureHistory history(policy.features.window);
  const bool record = grads != nullptr;

  for (std::size_t k = 0; k < steps; ++k) {
    StepRecord& r = rec[k];
    const double p = P[hp - 1 + k];
    r.error = pip - p;
    const double raw = pid_raw(pid_state, pip, p, c);
    history.push(r.error, pip);
    double a = raw;
    if (policy.lambda != 0.0) {
      const std::vector<double> x = history.features(policy.features);
      a += policy.lambda * policy.output_gain *
           policy.correction.forward_scalar(x, record ? &r.net_tape : nullptr);
    }
    r.clamp_active = inside(a, u_max);
    const double u = std::clamp(a, 0.0, u_max);
    U.push_back(u);
    out.controls.push_back(u);
    const double next = sim.predict(k, std::span(P).subspan(k, hp), std::span(U).subspan(k, hc),
                                    record ? &r.sim_tape : nullptr);
    P.push_back(next);
  }
  out.pressures.assign(P.begin() + static_cast<std::ptrdiff_t>(hp - 1), P.end());
  const double inv = 1.0 / static_cast<double>(steps);
  for (std::size_t t = 1; t <= steps; ++t) out.loss += std::abs(out.pressures[t] - pip) * inv;
  if (!record) return out;

  std::vector<double> gP(P.size(), 0.0);
  std::vector<double> gU(U.size(), 0.0);
  std::vector<double> gE(steps, 0.0);
  for (std::size_t t = 1; t <= steps; ++t) {
    const double d = out.pressures[t] - pip;
    gP[hp - 1 + t] = d > 0.0 ? inv : (d < 0.0 ? -inv : 0.0);
  }
  const std::size_t W = policy.features.window;
  const double feature_scale = policy.features.pressure_scale;
  const bool bounded = c.window != kUnboundedWindow;
  for (std::size_t k = steps; k-- > 0;) {
    const StepRecord& r = rec[k];
    sim.predict_backward(r.sim_tape, gP[hp + k], std::span(gP).subspan(k, hp),
                         std::span(gU).subspan(k, hc));
    const double ga = r.clamp_active ? gU[hc - 1 + k] : 0.0;
    if (policy.lambda != 0.0 && ga != 0.0) {
      const Mat dy = Mat::Constant(1, 1, ga * policy.lambda * policy.output_gain);
      const Mat dx = backward_accumulate(policy.correction, r.net_tape, dy, *grads);
      // Error feature j holds e_{k - W + 1 + j}.
      for (std::size_t j = 0; j < W; ++j) {
        const auto idx = static_cast<std::ptrdiff_t>(k + j + 1) - static_cast<std::ptrdiff_t>(W);
        if (idx >= 0) gE[static_cast<std::size_t>(idx)] += dx(static_cast<Eigen::Index>(j), 0) / feature_scale;
      }
    }
    if (ga != 0.0) {
      gE[k] += ga * (c.kp + c.kd + c.ki);
      if (k > 0) gE[k - 1] -= ga * c.kd;
      const std::size_t first = bounded && k > c.window ? k - c.window : 0;
      for (std::size_t j = first; j < k; ++j) gE[j] += ga * c.ki;
    }
    // e_k = pip - p_k
    gP[hp - 1 + k] -= gE[k];
  }
  return out;
}

double simulator_score(const ControllerPolicy& policy, std::span<const SimulatorModel* const> sims,
                       std::span<const Waveform> waveforms, double u_max) {
  if (sims.empty() || waveforms.empty()) return 0.0;
  double total = 0.0;
  for (const Waveform& wf : waveforms) {
    for (const SimulatorModel* sim : sims) {
      total += closed_loop_rollout(policy, *sim, wf, rollout_steps(wf), nullptr, u_max).loss;
    }
  }
  return total / static_cast<double>(sims.size() * waveforms.size());
}

TrainRun train_analytic(ControllerPolicy& policy, std::span<const SimulatorModel* const> sims,
                        std::span<const Waveform> waveforms, const AnalyticTraining& hyper) {
  policy.validate();
  const auto started = std::chrono::steady_clock::now();
  TrainRun run;
  if (hyper.score_each_epoch && hyper.epochs > 0) {
    run.scores.emplace_back(0, simulator_score(policy, sims, waveforms, hyper.u_max));
  }
  MlpGradients grads = policy.correction.zero_gradients();
  double initial = 0.0;
  for (std::size_t epoch = 0; epoch < hyper.epochs; ++epoch) {
    const double lr = cosine_lr(hyper.lr, epoch, hyper.epochs);
    grads.set_zero();
    double total = 0.0;
    std::size_t pairs = 0;
    for (const Waveform& wf : waveforms) {
      for (const SimulatorModel* sim : sims) {
        if (hyper.reset == GradientReset::kPerPair) grads.set_zero();
        const ClosedLoopResult r =
            closed_loop_rollout(policy, *sim, wf, rollout_steps(wf), &grads, hyper.u_max);
        if (!std::isfinite(r.loss)) throw DivergentLoss(r.loss, initial, epoch);
        sgd_step(policy.correction, grads, lr, hyper.weight_decay);
        total += r.loss;
        ++run.episodes;
        ++pairs;
      }
    }
    const double mean = pairs > 0 ? total / static_cast<double>(pairs) : 0.0;
    if (epoch == 0) initial = mean;
    if (mean > hyper.divergence_factor * initial) throw DivergentLoss(mean, initial, epoch);
    run.epoch_losses.push_back(mean);
    if (hyper.score_each_epoch) {
      run.scores.emplace_back(run.episodes, simulator_score(policy, sims, waveforms, hyper.u_max));
    }
  }
  run.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return run;
}

std::size_t episodes_to_reach(const TrainRun& run, double threshold) {
  for (const auto& [episode, score] : run.scores) {
    if (score <= threshold) return episode;
  }
  return static_cast<std::size_t>(-1);
}

json to_json(const ControllerPolicy& policy) {
  json pid{{"kp", policy.pid.kp}, {"ki", policy.pid.ki}, {"kd", policy.pid.kd}};
  pid["window"] = policy.pid.window == kUnboundedWindow ? json(nullptr) : json(policy.pid.window);
  return json{{"format", "ventctl-policy"},
              {"version", kFormatVersion},
              {"pid", pid},
              {"lambda", policy.lambda},
              {"output_gain", policy.output_gain},
              {"features",
               {{"window", policy.features.window},
                {"pressure_scale", policy.features.pressure_scale}}},
              {"network", to_json(policy.correction)}};
}

ControllerPolicy policy_from_json(const json& j) {
  try {
    if (j.at("format").get<std::string>() != "ventctl-policy") {
      throw ConfigInvalid("not a policy file");
    }
    if (j.at("version").get<int>() != kFormatVersion) {
      throw ConfigInvalid("unsupported policy format version");
    }
    ControllerPolicy p;
    const json& pid = j.at("pid");
    p.pid.kp = pid.at("kp").get<double>();
    p.pid.ki = pid.at("ki").get<double>();
    p.pid.kd = pid.at("kd").get<double>();
    p.pid.window = pid.value("window", json(nullptr)).is_null()
                       ? kUnboundedWindow
                       : pid.at("window").get<std::size_t>();
    p.lambda = j.at("lambda").get<double>();
    p.output_gain = j.at("output_gain").get<double>();
    p.features.window = j.at("features").at("window").get<std::size_t>();
    p.features.pressure_scale = j.at("features").at("pressure_scale").get<double>();
    p.correction = mlp_from_json(j.at("network"));
    p.validate();
    return p;
  } catch (const json::exception& e) {
    throw ConfigInvalid(std::string("malformed policy file: ") + e.what());
  }
}

void write_curve_csv(std::ostream& os, const TrainRun& run) {
  os << "episode,score\n";
  os.precision(17);
  for (const auto& [episode, score] : run.scores) os << episode << ',' << score << '\n';
}

}  // namespace ventctl
