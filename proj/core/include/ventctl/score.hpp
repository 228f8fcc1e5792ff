#pragma once

#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "ventctl/dynamics.hpp"

namespace ventctl {

using ControllerFactory = std::function<std::unique_ptr<Controller>()>;

struct ScoreOptions {
  std::size_t breaths = 3;
  std::size_t skip_breaths = 1;  // the first breath is a warm-up
  RunOptions run;
};

struct ScoreBreakdown {
  std::vector<double> per_waveform;
  double mean = 0.0;
};

/// Mean-per-step |p - pip| over each inspiratory phase, averaged over the
/// breaths after the skipped ones.
double inspiratory_l1(const Trajectory& traj, const Waveform& wf,
                      std::size_t skip_breaths);

/// Runs a fresh copy of `plant` (reset to rest) and a fresh controller per
/// waveform. A SafetyAbort scores +infinity for that waveform.
ScoreBreakdown score_controller_detailed(const ControllerFactory& make_controller,
                                         const Plant& plant,
                                         std::span<const Waveform> waveforms,
                                         const ScoreOptions& options = {});

double score_controller(const ControllerFactory& make_controller,
                        const Plant& plant, std::span<const Waveform> waveforms,
                        const ScoreOptions& options = {});

}  // namespace ventctl
