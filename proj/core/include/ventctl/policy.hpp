#pragma once

// Residual controller: clamp(PID + lambda * network), trained by
// differentiating the closed loop through learned simulators.

#include <cstdint>
#include <deque>
#include <iosfwd>
#include <span>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "ventctl/dynamics.hpp"
#include "ventctl/nnet.hpp"
#include "ventctl/pid.hpp"
#include "ventctl/simlearn.hpp"

namespace ventctl {

struct FeatureConfig {
  std::size_t window = 5;
  double pressure_scale = 35.0;

  void validate() const;
  std::size_t size() const { return 2 * window; }
};

/// Last `window` errors then last `window` targets (oldest first, zero-padded
/// at the front), divided by the pressure scale.
std::vector<double> controller_features(std::span<const double> errors,
                                        std::span<const double> targets,
                                        const FeatureConfig& cfg);

struct ControllerPolicy {
  PidCoefficients pid;
  Mlp correction;
  double lambda = 0.1;
  FeatureConfig features;
  double output_gain = 100.0;  // control units per unit network output

  /// Tanh network on the features with a zero output layer, so the policy
  /// starts out equal to its PID.
  static ControllerPolicy make(const PidCoefficients& pid, double lambda, Rng& rng,
                               const FeatureConfig& features = {}, std::size_t depth = 2,
                               std::size_t width = 32);

  void validate() const;
};

/// Rolling error and target windows for one breath.
class FeatureHistory {
 public:
  explicit FeatureHistory(std::size_t window = 5);
  void reset();
  void push(double error, double target);
  std::vector<double> features(const FeatureConfig& cfg) const;

 private:
  std::size_t window_;
  std::deque<double> errors_;
  std::deque<double> targets_;
};

/// clamp(pid_raw + lambda * gain * net(features), 0, u_max); pushes the
/// current error into both histories. With lambda = 0 this is pid_control.
double residual_control(const ControllerPolicy& policy, double target, double measured,
                        PidState& pid_state, FeatureHistory& history,
                        double u_max = kDefaultUMax);

class ResidualController final : public Controller {
 public:
  explicit ResidualController(ControllerPolicy policy, double u_max = kDefaultUMax);
  void begin_breath() override;
  double act(double target, double measured, double t) override;
  const ControllerPolicy& policy() const { return policy_; }

 private:
  ControllerPolicy policy_;
  double u_max_;
  PidState pid_state_;
  FeatureHistory history_;
};

struct ClosedLoopResult {
  double loss = 0.0;  // mean |p_t - pip| over the predicted steps
  std::vector<double> pressures;  // p_0 .. p_T
  std::vector<double> controls;   // u_0 .. u_{T-1}
};

/// One inspiratory episode of policy against simulator from a resting
/// history at peep. With `grads`, adds d(loss)/d(network parameters).
ClosedLoopResult closed_loop_rollout(const ControllerPolicy& policy,
                                     const SimulatorModel& sim, const Waveform& wf,
                                     std::size_t steps, MlpGradients* grads = nullptr,
                                     double u_max = kDefaultUMax);

/// Predicted steps per inspiration: the inspiratory sample count minus one.
std::size_t rollout_steps(const Waveform& wf);

/// Mean closed-loop loss over every (simulator, waveform) pair.
double simulator_score(const ControllerPolicy& policy,
                       std::span<const SimulatorModel* const> sims,
                       std::span<const Waveform> waveforms, double u_max = kDefaultUMax);

enum class GradientReset : std::uint8_t { kPerPair, kPerEpoch };

struct AnalyticTraining {
  std::size_t epochs = 30;
  double lr = 0.1;
  double weight_decay = 1e-5;
  GradientReset reset = GradientReset::kPerPair;
  double divergence_factor = 10.0;
  bool score_each_epoch = false;
  double u_max = kDefaultUMax;
};

struct TrainRun {
  std::vector<double> epoch_losses;
  std::vector<std::pair<std::size_t, double>> scores;  // (episodes seen, simulator score)
  std::size_t episodes = 0;
  double wall_seconds = 0.0;
};

/// Round-robin over waveform x simulator, one SGD step per pair. Throws
/// DivergentLoss when an epoch's mean episode loss exceeds divergence_factor
/// times the first epoch's.
TrainRun train_analytic(ControllerPolicy& policy, std::span<const SimulatorModel* const> sims,
                        std::span<const Waveform> waveforms, const AnalyticTraining& hyper);

struct ReinforceTraining {
  std::size_t episodes = 3000;
  double sigma = 5.0;
  double lr = 1e-3;
  double baseline_decay = 0.9;
  std::size_t score_every = 6;
  /// Stop once the simulator score reaches this value; negative disables.
  double stop_at = -1.0;
  double divergence_factor = 10.0;
  double u_max = kDefaultUMax;
};

/// Episodic REINFORCE with a Gaussian around the policy's control and a
/// per-waveform moving-average baseline; waveforms are visited in turn.
TrainRun train_reinforce_baseline(ControllerPolicy& policy, const SimulatorModel& sim,
                                  std::span<const Waveform> waveforms,
                                  const ReinforceTraining& hyper, Rng& rng);

/// First recorded episode count with score <= threshold, or SIZE_MAX.
std::size_t episodes_to_reach(const TrainRun& run, double threshold);

nlohmann::json to_json(const ControllerPolicy& policy);
ControllerPolicy policy_from_json(const nlohmann::json& j);

/// Header: episode,score
void write_curve_csv(std::ostream& os, const TrainRun& run);

}  // namespace ventctl
