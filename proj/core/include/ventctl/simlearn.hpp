#pragma once

// Learned inspiratory simulator: N_B boundary networks for the first steps of
// an episode, then one general network. Each network predicts the pressure
// increment from the recent pressure and control histories.

#include <functional>
#include <iosfwd>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ventctl/dynamics.hpp"
#include "ventctl/nnet.hpp"

namespace ventctl {

struct SimFeaturization {
  std::size_t pressure_history = 5;  // H_p
  std::size_t control_history = 10;  // H_c

  void validate() const;
  std::size_t size() const { return pressure_history + control_history; }
};

/// Per-feature standardization x' = (x - mean) / scale.
struct Normalizer {
  std::vector<double> mean;
  std::vector<double> scale;

  static Normalizer identity(std::size_t n);
  /// Columns of `x` are samples. A feature with (near) zero spread keeps
  /// unit scale.
  static Normalizer fit(const Mat& x);
  void validate() const;
  std::size_t size() const { return mean.size(); }
};

/// Pressures oldest to newest, then controls oldest to newest, normalized.
std::vector<double> featurize(std::span<const double> pressures,
                              std::span<const double> controls,
                              const Normalizer& norm);

struct SimArchitecture {
  std::size_t depth = 2;
  std::size_t width = 32;
  SimFeaturization features;
  std::size_t boundary_models = 1;  // N_B

  void validate() const;
};

/// Architecture reported for the physical test lung.
SimArchitecture reference_architecture(double resistance, double compliance);
/// Reported held-out open-loop MAE for the physical test lung, cmH2O.
double reference_open_loop_mae(double resistance, double compliance);
/// The reported histories and N_B with a smaller network.
SimArchitecture desk_architecture(double resistance, double compliance);

struct SimTraining {
  std::size_t epochs = 200;
  std::size_t batch = 64;
  double lr = 0.05;
  double weight_decay = 0.0;
};

/// Transitions feeding one sub-model.
struct RegressionSet {
  Mat inputs;            // raw features, one column per transition
  std::vector<double> last_pressure;
  std::vector<double> next_pressure;

  std::size_t size() const { return next_pressure.size(); }
};

/// Index i < N_B holds the transition into step i + 1 of every episode long
/// enough to have it; the last entry is the general set.
std::vector<RegressionSet> build_regression_sets(std::span<const Episode> episodes,
                                                 const SimFeaturization& feat,
                                                 std::size_t boundary_models);

struct EpisodeSplit {
  std::vector<Episode> train;
  std::vector<Episode> heldout;
};

/// Episode-level shuffle and split; heldout gets round(fraction * n), at
/// least one episode when n >= 2.
EpisodeSplit split_episodes(std::span<const Episode> episodes, Rng& rng,
                            double heldout_fraction = 0.2);

/// One network with the standardization of its pressure increments.
struct SubModel {
  Mlp net;
  double target_mean = 0.0;
  double target_scale = 1.0;
};

struct SimStepTape {
  std::size_t model = 0;
  Tape tape;
};

class SimulatorModel {
 public:
  SimulatorModel() = default;
  SimulatorModel(SimFeaturization feat, Normalizer input, std::vector<SubModel> boundary,
                 SubModel general, std::string setting_id);

  const SimFeaturization& featurization() const { return feat_; }
  const Normalizer& input_normalizer() const { return input_; }
  std::size_t boundary_count() const { return boundary_.size(); }
  const std::vector<SubModel>& boundary_models() const { return boundary_; }
  const SubModel& general_model() const { return general_; }
  const std::string& setting_id() const { return setting_id_; }

  /// Sub-model used to predict pressure step + 1.
  std::size_t model_index(std::size_t step) const;
  const SubModel& sub_model(std::size_t index) const;

  /// Next pressure given the last H_p pressures and last H_c controls
  /// (newest last, control history includes the current control).
  double predict(std::size_t step, std::span<const double> pressures,
                 std::span<const double> controls, SimStepTape* tape = nullptr) const;

  /// Adds d(out)/d(history) * dout into dp (length H_p) and du (length H_c).
  void predict_backward(const SimStepTape& tape, double dout, std::span<double> dp,
                        std::span<double> du) const;

 private:
  SimFeaturization feat_;
  Normalizer input_;
  std::vector<SubModel> boundary_;
  SubModel general_;
  std::string setting_id_;
};

struct SimTrainReport {
  std::vector<std::vector<double>> epoch_losses;  // per sub-model, standardized MSE
};

/// Fits every sub-model by minibatch SGD on squared error with a cosine
/// learning rate. Throws DegenerateData for empty or non-finite data.
SimulatorModel train_simulator(std::span<const Episode> train, const SimArchitecture& arch,
                               const SimTraining& hyper, Rng& rng,
                               const std::string& setting_id = {},
                               SimTrainReport* report = nullptr);

/// Pressure history for the first step of an episode: the context followed
/// by pressures[0], left-padded with its oldest value.
std::vector<double> initial_pressure_history(const Episode& ep, std::size_t length);

/// Rollout state kept for differentiation.
struct SimulatorRollout {
  std::vector<double> pressures;  // p_0 .. p_T
  std::vector<SimStepTape> tapes;
  std::vector<double> initial_history;
  std::vector<double> controls;
};

/// Autoregressive rollout: controls[i] moves p_i to p_{i+1}. Predictions are
/// fed back as pressure history; control history starts at zero.
SimulatorRollout simulate_episode(const SimulatorModel& model,
                                  std::span<const double> controls,
                                  std::span<const double> initial_history,
                                  bool record = false);

/// Gradient of sum_t dpressures[t] * p_t (t = 0..T) with respect to each
/// control, for a recorded rollout.
std::vector<double> rollout_control_gradient(const SimulatorModel& model,
                                             const SimulatorRollout& rollout,
                                             std::span<const double> dpressures);

struct OpenLoopReport {
  double mae = 0.0;
  std::vector<double> per_step;  // mean |err| of predicted step t + 1
  std::vector<std::size_t> per_step_count;
  std::size_t steps = 0;
};

/// Replays each episode's recorded controls and compares predicted pressures
/// to the recorded ones.
OpenLoopReport open_loop_mae(const SimulatorModel& model, std::span<const Episode> heldout);

/// Header: step,mean_abs_error,count
void write_open_loop_csv(std::ostream& os, const OpenLoopReport& report);

/// A system stepped on its own state by a pressure-valued control.
class PressureSystem {
 public:
  virtual ~PressureSystem() = default;
  virtual void reset() = 0;
  virtual double pressure() const = 0;
  virtual void step(double u) = 0;
};

class PlantSystem final : public PressureSystem {
 public:
  explicit PlantSystem(Plant plant);
  void reset() override;
  double pressure() const override { return plant_.state().pressure; }
  void step(double u) override { plant_.inhale(u); }

 private:
  Plant plant_;
  PlantState rest_;
};

class SimulatorSystem final : public PressureSystem {
 public:
  SimulatorSystem(std::shared_ptr<const SimulatorModel> model, double rest_pressure);
  void reset() override;
  double pressure() const override { return pressures_.back(); }
  void step(double u) override;

 private:
  std::shared_ptr<const SimulatorModel> model_;
  double rest_pressure_;
  std::vector<double> pressures_;
  std::vector<double> controls_;
  std::size_t step_ = 0;
};

using ControlSampler = std::function<std::vector<double>(Rng&, std::size_t horizon)>;

/// Draws a recorded episode's control sequence uniformly, padded with its
/// last control when shorter than the horizon.
ControlSampler recorded_control_sampler(std::vector<Episode> episodes);

struct DistanceEstimate {
  double mean = 0.0;
  double std_error = 0.0;
  std::vector<double> per_step;  // mean |p1 - p2| at t = 1..T
  std::size_t samples = 0;
};

/// Monte-Carlo estimate of E_u[ sum_t |p1_t - p2_t| ] with both systems
/// evolving on their own state from reset.
DistanceEstimate open_loop_distance(PressureSystem& a, PressureSystem& b,
                                    const ControlSampler& sampler, std::size_t horizon,
                                    std::size_t n_samples, Rng& rng);

nlohmann::json to_json(const SimulatorModel& model);
SimulatorModel simulator_from_json(const nlohmann::json& j);

}  // namespace ventctl
