#include "ventctl/explore.hpp"

#include <algorithm>
#include <stdexcept>

#include "ventctl/errors.hpp"

namespace ventctl {

using nlohmann::json;

double Range::sample(Rng& rng) const {
  if (lo == hi) return lo;
  std::uniform_real_distribution<double> dist(lo, hi);
  return dist(rng);
}

void ExplorationConfig::validate(const Waveform& wf) const {
  const auto fail = [](const std::string& msg) {
    throw ConfigInvalid("invalid exploration config: " + msg);
  };
  base.validate();
  for (const Range* r : {&boundary_control, &boundary_time, &triangle_control,
                         &triangle_time}) {
    if (!(r->lo <= r->hi)) fail("range min exceeds max");
  }
  if (!(p_boundary >= 0.0 && p_boundary <= 1.0)) fail("p_a must lie in [0, 1]");
  if (!(boundary_time.lo > 0.0)) fail("boundary decay time must be positive");
  if (!(triangle_time.lo >= 0.0) || triangle_time.hi > wf.t_insp) {
    fail("triangle window must lie within the inspiration");
  }
}

ExplorationConfig ExplorationConfig::reference(double resistance,
                                               double compliance) {
  struct Row {
    double r, c;
    PidCoefficients base;
    Range ca, ta, cb, tb;
    double pa;
  };
  static const Row kRows[] = {
      {5, 10, {1, 0.5, 0}, {50, 100}, {0.3, 0.6}, {-20, 40}, {0.1, 0.5}, 0.25},
      {5, 20, {1, 3, 0}, {50, 100}, {0.4, 0.8}, {-20, 60}, {0.1, 0.5}, 0.25},
      {5, 50, {2, 4, 0}, {75, 100}, {1.0, 1.5}, {-20, 60}, {0.1, 0.5}, 0.25},
      {20, 10, {1, 0.5, 0}, {50, 100}, {0.3, 0.6}, {-20, 40}, {0.1, 0.5}, 0.25},
      {20, 20, {0, 3, 0}, {30, 60}, {0.5, 1.0}, {-20, 40}, {0.1, 0.5}, 0.25},
      {20, 50, {0, 4, 0}, {70, 100}, {1.0, 1.5}, {-20, 40}, {0.1, 0.5}, 0.25},
  };
  for (const Row& row : kRows) {
    if (row.r == resistance && row.c == compliance) {
      return ExplorationConfig{row.base, row.ca, row.ta, row.cb, row.tb, row.pa};
    }
  }
  throw ConfigInvalid("no reference exploration parameters for this setting");
}

const char* schedule_policy_name(SchedulePolicy policy) {
  return policy == SchedulePolicy::kBoundary ? "boundary" : "triangular";
}

double AdditiveSchedule::operator()(double t) const {
  if (t < t_start || t > t_end) return 0.0;
  if (policy == SchedulePolicy::kBoundary) {
    return peak * std::max(0.0, 1.0 - (t - t_start) / (t_end - t_start));
  }
  const double apex = 0.5 * (t_start + t_end);
  if (t <= apex) {
    return apex > t_start ? peak * (t - t_start) / (apex - t_start) : peak;
  }
  return peak * (t_end - t) / (t_end - apex);
}

AdditiveSchedule boundary_schedule(Rng& rng, const ExplorationConfig& cfg) {
  AdditiveSchedule s;
  s.policy = SchedulePolicy::kBoundary;
  s.peak = cfg.boundary_control.sample(rng);
  s.t_start = 0.0;
  s.t_end = cfg.boundary_time.sample(rng);
  return s;
}

AdditiveSchedule triangular_schedule(Rng& rng, const ExplorationConfig& cfg) {
  AdditiveSchedule s;
  s.policy = SchedulePolicy::kTriangular;
  s.peak = cfg.triangle_control.sample(rng);
  s.t_start = cfg.triangle_time.lo;
  s.t_end = cfg.triangle_time.hi;
  return s;
}

ExplorationController::ExplorationController(PidCoefficients base, double u_max)
    : base_(base), u_max_(u_max), state_(base.window) {
  base_.validate();
}

double ExplorationController::act(double target, double measured, double t) {
  const double u = pid_control(state_, target, measured, base_, u_max_);
  return std::clamp(u + schedule_(t), 0.0, u_max_);
}

json Dataset::metadata() const {
  json breaths = json::array();
  for (const AdditiveSchedule& s : schedules) {
    breaths.push_back({{"policy", schedule_policy_name(s.policy)},
                       {"peak", s.peak},
                       {"t_start", s.t_start},
                       {"t_end", s.t_end}});
  }
  return json{{"breaths", breaths}, {"aborted", aborted}};
}

Dataset collect_dataset(Plant& plant, const ExplorationConfig& cfg,
                        const Waveform& wf, std::size_t n_breaths, Rng& rng,
                        const CollectOptions& options) {
  if (n_breaths < 1) throw std::invalid_argument("n_breaths must be >= 1");
  cfg.validate(wf);
  Dataset data;
  data.trajectory.setting_id = plant.setting().id();
  data.trajectory.waveform_id = wf.id();
  data.trajectory.dt = wf.dt;
  ExplorationController controller(cfg.base, options.run.u_max);
  std::bernoulli_distribution coin(cfg.p_boundary);
  const double t0 = plant.state().time;
  for (std::size_t b = 0; b < n_breaths; ++b) {
    const AdditiveSchedule schedule = coin(rng) ? boundary_schedule(rng, cfg)
                                                : triangular_schedule(rng, cfg);
    data.schedules.push_back(schedule);
    controller.set_schedule(schedule);
    const PlantState snapshot = plant.state();
    try {
      Trajectory breath = run_breath(plant, controller, wf, 1, options.run);
      const std::size_t offset = data.trajectory.samples.size();
      for (std::size_t k = 0; k < breath.samples.size(); ++k) {
        Sample s = breath.samples[k];
        s.t = t0 + static_cast<double>(offset + k) * wf.dt;
        data.trajectory.samples.push_back(s);
      }
    } catch (const SafetyAbort&) {
      data.aborted.push_back(b);
      plant.set_state(snapshot);
    }
  }
  if (!data.trajectory.empty()) {
    data.episodes = episode_split(data.trajectory, options.context_length);
  }
  return data;
}

json to_json(const ExplorationConfig& cfg) {
  const auto range = [](const Range& r) { return json::array({r.lo, r.hi}); };
  return json{{"base", json::array({cfg.base.kp, cfg.base.ki, cfg.base.kd})},
              {"boundary_control", range(cfg.boundary_control)},
              {"boundary_time", range(cfg.boundary_time)},
              {"triangle_control", range(cfg.triangle_control)},
              {"triangle_time", range(cfg.triangle_time)},
              {"p_boundary", cfg.p_boundary}};
}

ExplorationConfig exploration_config_from_json(const json& j) {
  try {
    const auto range = [&](const char* key) {
      const json& r = j.at(key);
      if (!r.is_array() || r.size() != 2) {
        throw ConfigInvalid(std::string(key) + " must be a [min, max] pair");
      }
      return Range{r[0].get<double>(), r[1].get<double>()};
    };
    ExplorationConfig cfg;
    const json& base = j.at("base");
    if (!base.is_array() || base.size() != 3) {
      throw ConfigInvalid("base must be a [P, I, D] triple");
    }
    cfg.base = PidCoefficients{base[0].get<double>(), base[1].get<double>(),
                               base[2].get<double>(), kUnboundedWindow};
    cfg.boundary_control = range("boundary_control");
    cfg.boundary_time = range("boundary_time");
    cfg.triangle_control = range("triangle_control");
    cfg.triangle_time = range("triangle_time");
    cfg.p_boundary = j.value("p_boundary", 0.25);
    return cfg;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigInvalid(std::string("malformed exploration config: ") + e.what());
  }
}

}  // namespace ventctl
