#include <algorithm>
#include <chrono>
#include <cmath>

#include "ventctl/errors.hpp"
#include "ventctl/policy.hpp"

namespace ventctl {

namespace {

struct SampledEpisode {
  double loss = 0.0;
  std::vector<Tape> tapes;
  std::vector<double> noise;  // s_k - mean_k
};

SampledEpisode sample_episode(const ControllerPolicy& policy, const SimulatorModel& sim,
                              const Waveform& wf, double sigma, double u_max, Rng& rng) {
  const std::size_t steps = rollout_steps(wf);
  const std::size_t hp = sim.featurization().pressure_history;
  const std::size_t hc = sim.featurization().control_history;
  std::vector<double> ph(hp, wf.peep);
  std::vector<double> uh(hc, 0.0);
  PidState pid_state(policy.pid.window);
  FeatureHistory history(policy.features.window);
  std::normal_distribution<double> gauss(0.0, 1.0);
  SampledEpisode ep;
  ep.tapes.resize(steps);
  ep.noise.resize(steps);
  for (std::size_t k = 0; k < steps; ++k) {
    const double p = ph.back();
    double mean = pid_raw(pid_state, wf.pip, p, policy.pid);
    history.push(wf.pip - p, wf.pip);
    mean += policy.lambda * policy.output_gain *
            policy.correction.forward_scalar(history.features(policy.features), &ep.tapes[k]);
    const double s = mean + sigma * gauss(rng);
    ep.noise[k] = s - mean;
    std::rotate(uh.begin(), uh.begin() + 1, uh.end());
    uh.back() = std::clamp(s, 0.0, u_max);
    const double next = sim.predict(k, ph, uh);
    std::rotate(ph.begin(), ph.begin() + 1, ph.end());
    ph.back() = next;
    ep.loss += std::abs(next - wf.pip) / static_cast<double>(steps);
  }
  return ep;
}

}  // namespace

TrainRun train_reinforce_baseline(ControllerPolicy& policy, const SimulatorModel& sim,
                                  std::span<const Waveform> waveforms,
                                  const ReinforceTraining& hyper, Rng& rng) {
  policy.validate();
  if (waveforms.empty()) throw ConfigInvalid("no waveforms to train on");
  if (!(hyper.sigma > 0.0)) throw ConfigInvalid("exploration sigma must be positive");
  const auto started = std::chrono::steady_clock::now();
  const SimulatorModel* sims[] = {&sim};
  TrainRun run;
  const std::size_t cadence = std::max<std::size_t>(1, hyper.score_every);
  if (hyper.episodes > 0) {
    run.scores.emplace_back(0, simulator_score(policy, sims, waveforms, hyper.u_max));
  }
  std::vector<double> baseline(waveforms.size(), 0.0);
  std::vector<bool> seen(waveforms.size(), false);
  double initial = -1.0;
  MlpGradients grads = policy.correction.zero_gradients();
  const double inv_var = 1.0 / (hyper.sigma * hyper.sigma);
  double epoch_total = 0.0;
  for (std::size_t e = 0; e < hyper.episodes; ++e) {
    const std::size_t w = e % waveforms.size();
    const SampledEpisode ep =
        sample_episode(policy, sim, waveforms[w], hyper.sigma, hyper.u_max, rng);
    if (!std::isfinite(ep.loss)) throw DivergentLoss(ep.loss, initial, e);
    const double ret = -ep.loss;
    if (!seen[w]) {
      seen[w] = true;
      baseline[w] = ret;
    }
    const double advantage = ret - baseline[w];
    baseline[w] = hyper.baseline_decay * baseline[w] + (1.0 - hyper.baseline_decay) * ret;
    // Minimizing -advantage * log pi(s | mean).
    grads.set_zero();
    if (advantage != 0.0) {
      const double gain = policy.lambda * policy.output_gain;
      for (std::size_t k = 0; k < ep.tapes.size(); ++k) {
        const double dmean = -advantage * ep.noise[k] * inv_var;
        backward_accumulate(policy.correction, ep.tapes[k], Mat::Constant(1, 1, dmean * gain),
                            grads);
      }
      sgd_step(policy.correction, grads, hyper.lr);
    }
    ++run.episodes;
    epoch_total += ep.loss;
    if (run.episodes % waveforms.size() == 0) {
      const double mean = epoch_total / static_cast<double>(waveforms.size());
      if (initial < 0.0) initial = mean;
      if (mean > hyper.divergence_factor * initial) throw DivergentLoss(mean, initial, e);
      run.epoch_losses.push_back(mean);
      epoch_total = 0.0;
    }
    if (run.episodes % cadence == 0) {
      const double score = simulator_score(policy, sims, waveforms, hyper.u_max);
      run.scores.emplace_back(run.episodes, score);
      if (hyper.stop_at >= 0.0 && score <= hyper.stop_at) break;
    }
  }
  run.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return run;
}

}  // namespace ventctl
