#include <cmath>
#include <ostream>

#include "ventctl/errors.hpp"
#include "ventctl/simlearn.hpp"

namespace ventctl {

OpenLoopReport open_loop_mae(const SimulatorModel& model, std::span<const Episode> heldout) {
  OpenLoopReport report;
  double total = 0.0;
  const std::size_t hp = model.featurization().pressure_history;
  for (const Episode& ep : heldout) {
    if (ep.size() < 2) continue;
    const std::span<const double> controls(ep.controls.data(), ep.size() - 1);
    const SimulatorRollout r =
        simulate_episode(model, controls, initial_pressure_history(ep, hp));
    for (std::size_t t = 1; t < ep.size(); ++t) {
      const double err = std::abs(r.pressures[t] - ep.pressures[t]);
      if (report.per_step.size() < t) {
        report.per_step.resize(t, 0.0);
        report.per_step_count.resize(t, 0);
      }
      report.per_step[t - 1] += err;
      ++report.per_step_count[t - 1];
      total += err;
      ++report.steps;
    }
  }
  if (report.steps == 0) throw EmptyTrajectory();
  for (std::size_t k = 0; k < report.per_step.size(); ++k) {
    report.per_step[k] /= static_cast<double>(report.per_step_count[k]);
  }
  report.mae = total / static_cast<double>(report.steps);
  return report;
}

void write_open_loop_csv(std::ostream& os, const OpenLoopReport& report) {
  os << "step,mean_abs_error,count\n";
  os.precision(17);
  for (std::size_t k = 0; k < report.per_step.size(); ++k) {
    os << (k + 1) << ',' << report.per_step[k] << ',' << report.per_step_count[k] << '\n';
  }
}

PlantSystem::PlantSystem(Plant plant) : plant_(std::move(plant)) {
  plant_.reset();
  rest_ = plant_.state();
}

void PlantSystem::reset() { plant_.set_state(rest_); }

SimulatorSystem::SimulatorSystem(std::shared_ptr<const SimulatorModel> model,
                                 double rest_pressure)
    : model_(std::move(model)), rest_pressure_(rest_pressure) {
  if (!model_) throw ConfigInvalid("simulator system needs a model");
  reset();
}

void SimulatorSystem::reset() {
  pressures_.assign(model_->featurization().pressure_history, rest_pressure_);
  controls_.assign(model_->featurization().control_history, 0.0);
  step_ = 0;
}

void SimulatorSystem::step(double u) {
  controls_.erase(controls_.begin());
  controls_.push_back(u);
  const double p = model_->predict(step_++, pressures_, controls_);
  pressures_.erase(pressures_.begin());
  pressures_.push_back(p);
}

ControlSampler recorded_control_sampler(std::vector<Episode> episodes) {
  std::erase_if(episodes, [](const Episode& ep) { return ep.controls.empty(); });
  if (episodes.empty()) throw DegenerateData("no recorded control sequences to sample");
  return [episodes = std::move(episodes)](Rng& rng, std::size_t horizon) {
    std::uniform_int_distribution<std::size_t> pick(0, episodes.size() - 1);
    std::vector<double> u = episodes[pick(rng)].controls;
    const double last = u.back();
    u.resize(horizon, last);
    return u;
  };
}

DistanceEstimate open_loop_distance(PressureSystem& a, PressureSystem& b,
                                    const ControlSampler& sampler, std::size_t horizon,
                                    std::size_t n_samples, Rng& rng) {
  DistanceEstimate est;
  est.samples = n_samples;
  est.per_step.assign(horizon, 0.0);
  if (n_samples == 0) return est;
  if (&a == &b) {
    // Stepping one object twice per tick would compare it with itself shifted.
    for (std::size_t s = 0; s < n_samples; ++s) sampler(rng, horizon);
    return est;
  }
  std::vector<double> totals;
  totals.reserve(n_samples);
  for (std::size_t s = 0; s < n_samples; ++s) {
    const std::vector<double> u = sampler(rng, horizon);
    a.reset();
    b.reset();
    double sum = 0.0;
    for (std::size_t t = 0; t < horizon; ++t) {
      a.step(u[t]);
      b.step(u[t]);
      const double d = std::abs(a.pressure() - b.pressure());
      est.per_step[t] += d;
      sum += d;
    }
    totals.push_back(sum);
  }
  const auto n = static_cast<double>(n_samples);
  for (double& v : est.per_step) v /= n;
  double mean = 0.0;
  for (double v : totals) mean += v;
  mean /= n;
  est.mean = mean;
  if (n_samples > 1) {
    double ss = 0.0;
    for (double v : totals) ss += (v - mean) * (v - mean);
    est.std_error = std::sqrt(ss / (n - 1.0) / n);
  }
  return est;
}

}  // namespace ventctl
