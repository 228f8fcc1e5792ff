#pragma once

// Ground-truth lung plants, target waveforms, and the episodic view of
// inspiratory phases.
//
// Units: pressure cmH2O, volume mL, time s, resistance cmH2O/(L/s),
// compliance mL/cmH2O. The control u is a flow command in control units;
// one unit corresponds to LungSetting::flow_scale mL/s.

#include <cstddef>
#include <cstdint>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace ventctl {

using Rng = std::mt19937_64;

inline constexpr double kDefaultUMax = 100.0;
inline constexpr double kDefaultPeep = 5.0;
inline constexpr double kDefaultPMax = 70.0;
inline constexpr double kDefaultDt = 0.03;

enum class Phase : std::uint8_t { kInspiratory, kExpiratory };

const char* phase_tag(Phase phase);  // "in" / "ex"
Phase phase_from_tag(const std::string& tag);

struct LungSetting {
  double resistance = 5.0;   // R, cmH2O/(L/s)
  double compliance = 50.0;  // C, mL/cmH2O
  double p0 = kDefaultPeep;  // baseline pressure; RC reference pressure
  double r0 = default_rest_radius();
  double p_supply = 60.0;
  double k_valve = 0.55;      // R_in = k_valve / d^4
  double flow_scale = 10.0;   // mL/s per control unit

  /// Radius of a sphere holding 300 mL.
  static double default_rest_radius();

  /// ISO test-lung setting; R in {5, 20, 50}, C in {10, 20, 50}.
  static LungSetting iso(double resistance, double compliance);

  /// Throws ConfigInvalid when an invariant is violated.
  void validate() const;

  /// "R5C50"-style key used for file names and simulator dispatch.
  std::string id() const;

  /// Expiratory time constant R*C in seconds.
  double time_constant() const { return resistance * compliance * 1e-3; }
};

struct Waveform {
  double pip = 35.0;
  double peep = kDefaultPeep;
  double t_insp = 1.0;
  double t_exp = 2.0;
  double dt = kDefaultDt;

  void validate() const;
  std::string id() const;  // "PIP35"
  double period() const { return t_insp + t_exp; }
  std::size_t steps_per_breath() const;
  /// Number of samples k with phase(k * dt) inspiratory.
  std::size_t inspiratory_steps() const;
};

/// Waveforms sharing PEEP and timing, one per PIP.
std::vector<Waveform> make_waveforms(std::span<const double> pips,
                                     const Waveform& base = {});

/// The six clinical PIP levels, 10 to 35 cmH2O.
std::span<const double> default_pips();

bool is_inspiratory(double t, const Waveform& wf);
double waveform_target(double t, const Waveform& wf);

struct PlantState {
  double volume = 0.0;    // mL
  double pressure = 0.0;  // cmH2O, noiseless
  double time = 0.0;      // s
  Phase phase = Phase::kInspiratory;
};

double balloon_pressure(double volume, const LungSetting& ls);
/// Volume at which the balloon radius equals r0 (pressure equals p0).
double balloon_rest_volume(const LungSetting& ls);

PlantState balloon_step(const PlantState& state, double u, double dt,
                        const LungSetting& ls);
PlantState rc_step(const PlantState& state, double u, double dt,
                   const LungSetting& ls);

/// Inspiratory valve flow for an opening d in [0, 1], in control units.
double valve_flow(double p_lung, double d_opening, const LungSetting& ls);

enum class PlantModel : std::uint8_t { kRc, kBalloon };

const char* plant_model_name(PlantModel model);
PlantModel plant_model_from_name(const std::string& name);

struct PlantOptions {
  PlantModel model = PlantModel::kRc;
  double dt = kDefaultDt;
  double p_max = kDefaultPMax;
  double noise_sigma = 0.0;  // additive Gaussian on observed pressure
  std::uint64_t seed = 0;
};

/// Stateful single-owner lung plant. Copies carry the full state including
/// the sensor-noise generator.
class Plant {
 public:
  Plant(LungSetting setting, PlantOptions options = {});

  /// Returns to the rest state at t = 0; the noise generator is reseeded.
  void reset();

  /// Pressure as seen by the sensor.
  double observe();

  /// Advance one step with inspiratory flow command u.
  void inhale(double u);

  /// Advance one step with the inspiratory valve closed and the
  /// expiratory valve venting toward peep.
  void exhale(double peep);

  const PlantState& state() const { return state_; }
  void set_state(const PlantState& state) { state_ = state; }
  const LungSetting& setting() const { return setting_; }
  const PlantOptions& options() const { return options_; }
  double dt() const { return options_.dt; }

 private:
  PlantState rest_state() const;
  void check_ceiling() const;

  LungSetting setting_;
  PlantOptions options_;
  PlantState state_;
  Rng noise_rng_;
};

/// Feedback law driving the inspiratory valve.
class Controller {
 public:
  virtual ~Controller() = default;
  /// Called at the start of every inspiration.
  virtual void begin_breath() = 0;
  /// t is the time since the start of the current breath.
  virtual double act(double target, double measured, double t) = 0;
};

class ZeroController final : public Controller {
 public:
  void begin_breath() override {}
  double act(double, double, double) override { return 0.0; }
};

class ConstantController final : public Controller {
 public:
  explicit ConstantController(double u) : u_(u) {}
  void begin_breath() override {}
  double act(double, double, double) override { return u_; }

 private:
  double u_;
};

struct Sample {
  double t = 0.0;
  double u = 0.0;
  double p = 0.0;
  Phase phase = Phase::kInspiratory;

  friend bool operator==(const Sample&, const Sample&) = default;
};

/// Uniformly spaced record of (t, u, p, phase). Sample k holds the pressure
/// observed at t_k and the control applied from t_k to t_k + dt.
struct Trajectory {
  std::vector<Sample> samples;
  std::string setting_id;
  std::string waveform_id;
  double dt = kDefaultDt;

  std::size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }
};

struct RunOptions {
  double u_max = kDefaultUMax;
};

/// Runs n_breaths consecutive breaths on the plant. The controller drives
/// inspiration; expiration is hard-coded (valve closed, exponential vent).
/// Throws SafetyAbort if pressure exceeds the plant's ceiling.
Trajectory run_breath(Plant& plant, Controller& controller, const Waveform& wf,
                      std::size_t n_breaths, const RunOptions& options = {});

/// One inspiratory phase. controls[k] moves pressures[k] to pressures[k+1];
/// context holds the pressures observed just before pressures[0], oldest
/// first.
struct Episode {
  std::vector<double> context;
  std::vector<double> pressures;
  std::vector<double> controls;
  double start_time = 0.0;

  std::size_t size() const { return pressures.size(); }
};

inline constexpr std::size_t kDefaultContextLength = 10;

/// Maximal contiguous inspiratory runs of the trajectory.
std::vector<Episode> episode_split(const Trajectory& traj,
                                   std::size_t context_length =
                                       kDefaultContextLength);

}  // namespace ventctl
