#include "ventctl/dynamics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "ventctl/errors.hpp"

namespace ventctl {

namespace {

std::string compact(double value) {
  std::ostringstream os;
  os << value;
  return os.str();
}

constexpr std::array<double, 6> kDefaultPips = {10.0, 15.0, 20.0,
                                                25.0, 30.0, 35.0};

}  // namespace

const char* phase_tag(Phase phase) {
  return phase == Phase::kInspiratory ? "in" : "ex";
}

Phase phase_from_tag(const std::string& tag) {
  if (tag == "in") return Phase::kInspiratory;
  if (tag == "ex") return Phase::kExpiratory;
  throw ConfigInvalid("unknown phase tag '" + tag + "'");
}

double LungSetting::default_rest_radius() {
  return std::cbrt(3.0 * 300.0 / (4.0 * std::numbers::pi));
}

LungSetting LungSetting::iso(double resistance, double compliance) {
  const auto in = [](double x, std::initializer_list<double> allowed) {
    return std::find(allowed.begin(), allowed.end(), x) != allowed.end();
  };
  if (!in(resistance, {5.0, 20.0, 50.0}) || !in(compliance, {10.0, 20.0, 50.0})) {
    throw ConfigInvalid("not an ISO lung setting: R=" + compact(resistance) +
                        " C=" + compact(compliance));
  }
  LungSetting ls;
  ls.resistance = resistance;
  ls.compliance = compliance;
  return ls;
}

void LungSetting::validate() const {
  const auto fail = [](const std::string& msg) {
    throw ConfigInvalid("invalid lung setting: " + msg);
  };
  if (!(resistance > 0.0)) fail("R must be positive");
  if (!(compliance > 0.0)) fail("C must be positive");
  if (!(p0 > 0.0)) fail("p0 must be positive");
  if (!(p_supply > p0)) fail("p_supply must exceed p0");
  if (!(r0 > 0.0)) fail("r0 must be positive");
  if (!(k_valve > 0.0)) fail("k_valve must be positive");
  if (!(flow_scale > 0.0)) fail("flow_scale must be positive");
}

std::string LungSetting::id() const {
  return "R" + compact(resistance) + "C" + compact(compliance);
}

void Waveform::validate() const {
  const auto fail = [](const std::string& msg) {
    throw ConfigInvalid("invalid waveform: " + msg);
  };
  if (!(peep >= 0.0)) fail("peep must be non-negative");
  if (!(pip > peep)) fail("pip must exceed peep");
  if (!(t_insp > 0.0) || !(t_exp > 0.0) || !(dt > 0.0)) {
    fail("durations and dt must be positive");
  }
  const double steps = period() / dt;
  if (std::abs(steps - std::round(steps)) > 1e-6) {
    fail("breath period is not a multiple of dt");
  }
}

std::string Waveform::id() const { return "PIP" + compact(pip); }

std::size_t Waveform::steps_per_breath() const {
  return static_cast<std::size_t>(std::llround(period() / dt));
}

std::size_t Waveform::inspiratory_steps() const {
  std::size_t n = 0;
  const std::size_t steps = steps_per_breath();
  for (std::size_t k = 0; k < steps; ++k) {
    if (is_inspiratory(static_cast<double>(k) * dt, *this)) ++n;
  }
  return n;
}

std::vector<Waveform> make_waveforms(std::span<const double> pips,
                                     const Waveform& base) {
  std::vector<Waveform> out;
  out.reserve(pips.size());
  for (double pip : pips) {
    Waveform wf = base;
    wf.pip = pip;
    wf.validate();
    out.push_back(wf);
  }
  return out;
}

std::span<const double> default_pips() { return kDefaultPips; }

bool is_inspiratory(double t, const Waveform& wf) {
  if (t < 0.0) throw std::invalid_argument("waveform time must be >= 0");
  const double period = wf.period();
  const double tol = 1e-9 * period;
  double pos = std::fmod(t, period);
  if (period - pos < tol) pos = 0.0;
  return pos < wf.t_insp - tol;
}

double waveform_target(double t, const Waveform& wf) {
  return is_inspiratory(t, wf) ? wf.pip : wf.peep;
}

double balloon_pressure(double volume, const LungSetting& ls) {
  const double r = std::cbrt(3.0 * volume / (4.0 * std::numbers::pi));
  const double ratio = r / ls.r0;
  const double ratio6 = ratio * ratio * ratio * ratio * ratio * ratio;
  return ls.p0 + (1.0 - ratio6) / (r * ls.r0 * ls.r0);
}

double balloon_rest_volume(const LungSetting& ls) {
  return 4.0 / 3.0 * std::numbers::pi * ls.r0 * ls.r0 * ls.r0;
}

PlantState balloon_step(const PlantState& state, double u, double dt,
                        const LungSetting& ls) {
  if (!(dt > 0.0)) throw std::invalid_argument("dt must be positive");
  const double v = state.volume + u * ls.flow_scale * dt;
  if (!(v > 0.0)) throw NonPositiveVolume(v, state.time + dt);
  PlantState next = state;
  next.volume = v;
  next.pressure = balloon_pressure(v, ls);
  next.time = state.time + dt;
  return next;
}

PlantState rc_step(const PlantState& state, double u, double dt,
                   const LungSetting& ls) {
  if (!(dt > 0.0)) throw std::invalid_argument("dt must be positive");
  const double flow = u * ls.flow_scale;  // mL/s
  const double v = state.volume + flow * dt;
  // RC volume is measured above the rest volume, so an empty lung is valid.
  if (v < 0.0) throw NonPositiveVolume(v, state.time + dt);
  PlantState next = state;
  next.volume = v;
  next.pressure = ls.p0 + v / ls.compliance + ls.resistance * flow * 1e-3;
  next.time = state.time + dt;
  return next;
}

double valve_flow(double p_lung, double d_opening, const LungSetting& ls) {
  if (d_opening < 0.0 || d_opening > 1.0) {
    throw std::invalid_argument("valve opening must lie in [0, 1]");
  }
  const double d2 = d_opening * d_opening;
  return std::max(0.0, (ls.p_supply - p_lung) * d2 * d2 / ls.k_valve);
}

const char* plant_model_name(PlantModel model) {
  return model == PlantModel::kRc ? "rc" : "balloon";
}

PlantModel plant_model_from_name(const std::string& name) {
  if (name == "rc") return PlantModel::kRc;
  if (name == "balloon") return PlantModel::kBalloon;
  throw ConfigInvalid("unknown plant model '" + name + "'");
}

Plant::Plant(LungSetting setting, PlantOptions options)
    : setting_(setting), options_(options) {
  setting_.validate();
  if (!(options_.dt > 0.0)) throw ConfigInvalid("plant dt must be positive");
  if (!(options_.noise_sigma >= 0.0)) {
    throw ConfigInvalid("noise sigma must be non-negative");
  }
  reset();
}

PlantState Plant::rest_state() const {
  PlantState s;
  if (options_.model == PlantModel::kRc) {
    s.volume = 0.0;
    s.pressure = setting_.p0;
  } else {
    s.volume = balloon_rest_volume(setting_);
    s.pressure = balloon_pressure(s.volume, setting_);
  }
  return s;
}

void Plant::reset() {
  state_ = rest_state();
  noise_rng_.seed(options_.seed);
}

double Plant::observe() {
  if (options_.noise_sigma == 0.0) return state_.pressure;
  std::normal_distribution<double> noise(0.0, options_.noise_sigma);
  return state_.pressure + noise(noise_rng_);
}

void Plant::check_ceiling() const {
  if (state_.pressure > options_.p_max) {
    throw SafetyAbort(state_.time, state_.pressure);
  }
}

void Plant::inhale(double u) {
  state_ = options_.model == PlantModel::kRc
               ? rc_step(state_, u, options_.dt, setting_)
               : balloon_step(state_, u, options_.dt, setting_);
  state_.phase = Phase::kInspiratory;
  check_ceiling();
}

void Plant::exhale(double peep) {
  const double decay = std::exp(-options_.dt / setting_.time_constant());
  PlantState next = state_;
  if (options_.model == PlantModel::kRc) {
    // Vent the elastic pressure; the resistive drop vanishes with the flow.
    const double elastic = setting_.p0 + state_.volume / setting_.compliance;
    const double p = peep + (elastic - peep) * decay;
    next.volume = std::max(0.0, setting_.compliance * (p - setting_.p0));
    next.pressure = setting_.p0 + next.volume / setting_.compliance;
  } else {
    const double rest = balloon_rest_volume(setting_);
    next.volume = rest + (state_.volume - rest) * decay;
    next.pressure = balloon_pressure(next.volume, setting_);
  }
  next.time = state_.time + options_.dt;
  next.phase = Phase::kExpiratory;
  state_ = next;
  check_ceiling();
}

Trajectory run_breath(Plant& plant, Controller& controller, const Waveform& wf,
                      std::size_t n_breaths, const RunOptions& options) {
  if (n_breaths < 1) throw std::invalid_argument("n_breaths must be >= 1");
  wf.validate();
  if (std::abs(wf.dt - plant.dt()) > 1e-12) {
    throw ConfigInvalid("waveform dt does not match plant dt");
  }
  Trajectory traj;
  traj.setting_id = plant.setting().id();
  traj.waveform_id = wf.id();
  traj.dt = wf.dt;
  const std::size_t steps = wf.steps_per_breath();
  traj.samples.reserve(n_breaths * steps);
  const double t0 = plant.state().time;
  std::size_t global = 0;
  for (std::size_t b = 0; b < n_breaths; ++b) {
    for (std::size_t j = 0; j < steps; ++j, ++global) {
      const double t_in = static_cast<double>(j) * wf.dt;
      Sample s;
      s.t = t0 + static_cast<double>(global) * wf.dt;
      s.p = plant.observe();
      if (is_inspiratory(t_in, wf)) {
        if (j == 0) controller.begin_breath();
        s.phase = Phase::kInspiratory;
        s.u = std::clamp(controller.act(wf.pip, s.p, t_in), 0.0, options.u_max);
        traj.samples.push_back(s);
        plant.inhale(s.u);
      } else {
        s.phase = Phase::kExpiratory;
        traj.samples.push_back(s);
        plant.exhale(wf.peep);
      }
    }
  }
  return traj;
}

std::vector<Episode> episode_split(const Trajectory& traj,
                                   std::size_t context_length) {
  if (traj.empty()) throw EmptyTrajectory();
  std::vector<Episode> out;
  const auto& s = traj.samples;
  std::size_t i = 0;
  while (i < s.size()) {
    if (s[i].phase != Phase::kInspiratory) {
      ++i;
      continue;
    }
    Episode ep;
    ep.start_time = s[i].t;
    const std::size_t ctx_begin = i >= context_length ? i - context_length : 0;
    for (std::size_t k = ctx_begin; k < i; ++k) ep.context.push_back(s[k].p);
    while (i < s.size() && s[i].phase == Phase::kInspiratory) {
      ep.pressures.push_back(s[i].p);
      ep.controls.push_back(s[i].u);
      ++i;
    }
    out.push_back(std::move(ep));
  }
  return out;
}

}  // namespace ventctl
