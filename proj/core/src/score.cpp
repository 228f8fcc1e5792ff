#include "ventctl/score.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "ventctl/errors.hpp"

namespace ventctl {

double inspiratory_l1(const Trajectory& traj, const Waveform& wf,
                      std::size_t skip_breaths) {
  const std::size_t steps = wf.steps_per_breath();
  const std::size_t breaths = traj.size() / steps;
  if (breaths <= skip_breaths) {
    throw std::invalid_argument("not enough breaths to score");
  }
  double total = 0.0;
  for (std::size_t b = skip_breaths; b < breaths; ++b) {
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t j = 0; j < steps; ++j) {
      const Sample& s = traj.samples[b * steps + j];
      if (s.phase != Phase::kInspiratory) continue;
      sum += std::abs(s.p - wf.pip);
      ++n;
    }
    total += sum / static_cast<double>(n);
  }
  return total / static_cast<double>(breaths - skip_breaths);
}

ScoreBreakdown score_controller_detailed(const ControllerFactory& make_controller,
                                         const Plant& plant,
                                         std::span<const Waveform> waveforms,
                                         const ScoreOptions& options) {
  if (waveforms.empty()) throw std::invalid_argument("no waveforms to score");
  ScoreBreakdown out;
  double sum = 0.0;
  for (const Waveform& wf : waveforms) {
    Plant p = plant;
    p.reset();
    auto controller = make_controller();
    double score = std::numeric_limits<double>::infinity();
    try {
      const Trajectory traj =
          run_breath(p, *controller, wf, options.breaths, options.run);
      score = inspiratory_l1(traj, wf, options.skip_breaths);
    } catch (const SafetyAbort&) {
    }
    out.per_waveform.push_back(score);
    sum += score;
  }
  out.mean = sum / static_cast<double>(waveforms.size());
  return out;
}

double score_controller(const ControllerFactory& make_controller,
                        const Plant& plant, std::span<const Waveform> waveforms,
                        const ScoreOptions& options) {
  return score_controller_detailed(make_controller, plant, waveforms, options)
      .mean;
}

}  // namespace ventctl
