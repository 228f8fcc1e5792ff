#pragma once

// Safe exploration around a baseline PID: each inspiration receives an
// additive control schedule drawn from one of two families.

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ventctl/dynamics.hpp"
#include "ventctl/pid.hpp"

namespace ventctl {

struct Range {
  double lo = 0.0;
  double hi = 0.0;
  double sample(Rng& rng) const;
};

struct ExplorationConfig {
  PidCoefficients base;
  Range boundary_control;   // peak of the decaying kick at inhalation start
  Range boundary_time;      // time for the kick to decay to zero, s
  Range triangle_control;   // apex of the triangle, may be negative
  Range triangle_time;      // support of the triangle within inspiration, s
  double p_boundary = 0.25;

  /// Throws ConfigInvalid. The triangle support must lie inside the
  /// inspiration; the boundary decay may outlast it.
  void validate(const Waveform& wf) const;

  /// Exploration parameters reported for the physical test lung.
  static ExplorationConfig reference(double resistance, double compliance);
};

enum class SchedulePolicy : std::uint8_t { kBoundary, kTriangular };

const char* schedule_policy_name(SchedulePolicy policy);

/// Continuous piecewise-linear additive control, zero outside its support.
struct AdditiveSchedule {
  SchedulePolicy policy = SchedulePolicy::kBoundary;
  double peak = 0.0;
  double t_start = 0.0;
  double t_end = 0.0;

  double operator()(double t) const;
};

AdditiveSchedule boundary_schedule(Rng& rng, const ExplorationConfig& cfg);
AdditiveSchedule triangular_schedule(Rng& rng, const ExplorationConfig& cfg);

/// Base PID (clamped) plus an additive schedule, clamped again.
class ExplorationController final : public Controller {
 public:
  ExplorationController(PidCoefficients base, double u_max = kDefaultUMax);
  void set_schedule(const AdditiveSchedule& schedule) { schedule_ = schedule; }
  void begin_breath() override { state_.reset(); }
  double act(double target, double measured, double t) override;

 private:
  PidCoefficients base_;
  double u_max_;
  PidState state_;
  AdditiveSchedule schedule_;
};

struct CollectOptions {
  RunOptions run;
  std::size_t context_length = kDefaultContextLength;
};

struct Dataset {
  Trajectory trajectory;             // successful breaths only
  std::vector<AdditiveSchedule> schedules;  // one per breath attempted
  std::vector<std::size_t> aborted;  // breath indices skipped after SafetyAbort
  std::vector<Episode> episodes;

  /// Exploration metadata for the trajectory header.
  nlohmann::json metadata() const;
};

/// Runs n_breaths breaths, drawing the schedule family per breath. An aborted
/// breath is dropped and the plant restored to its state at that breath's
/// start, so the stored trajectory stays continuous.
Dataset collect_dataset(Plant& plant, const ExplorationConfig& cfg,
                        const Waveform& wf, std::size_t n_breaths, Rng& rng,
                        const CollectOptions& options = {});

nlohmann::json to_json(const ExplorationConfig& cfg);
ExplorationConfig exploration_config_from_json(const nlohmann::json& j);

}  // namespace ventctl
