#include "ventctl/pid.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <ostream>
#include <thread>
#include <tuple>

#include "ventctl/errors.hpp"
#include "ventctl/score.hpp"

namespace ventctl {

void PidCoefficients::validate() const {
  if (!(kp >= 0.0) || !(ki >= 0.0) || !(kd >= 0.0)) {
    throw ConfigInvalid("PID gains must be non-negative");
  }
}

bool lexicographically_less(const PidCoefficients& a, const PidCoefficients& b) {
  return std::tie(a.kp, a.ki, a.kd) < std::tie(b.kp, b.ki, b.kd);
}

PidState::PidState(std::size_t window) : window_(window) {
  if (window_ != kUnboundedWindow) ring_.assign(window_ + 1, 0.0);
}

void PidState::reset() {
  std::fill(ring_.begin(), ring_.end(), 0.0);
  head_ = 0;
  count_ = 0;
  running_ = 0.0;
  current_ = 0.0;
  previous_ = 0.0;
}

void PidState::push(double error) {
  previous_ = current_;
  current_ = error;
  ++count_;
  if (window_ == kUnboundedWindow) {
    running_ += error;
    return;
  }
  ring_[head_] = error;
  head_ = (head_ + 1) % ring_.size();
}

double PidState::integral() const {
  if (window_ == kUnboundedWindow) return running_;
  double sum = 0.0;
  for (double e : ring_) sum += e;
  return sum;
}

double pid_raw(PidState& state, double target, double measured,
               const PidCoefficients& c) {
  state.push(target - measured);
  return c.kp * state.current() + c.ki * state.integral() +
         c.kd * (state.current() - state.previous());
}

double pid_control(PidState& state, double target, double measured,
                   const PidCoefficients& c, double u_max) {
  return std::clamp(pid_raw(state, target, measured, c), 0.0, u_max);
}

PidController::PidController(PidCoefficients c, double u_max)
    : c_(c), u_max_(u_max), state_(c.window) {
  c_.validate();
}

double PidController::act(double target, double measured, double) {
  return pid_control(state_, target, measured, c_, u_max_);
}

PidCoefficients reference_best_pid(double resistance, double compliance) {
  struct Row {
    double r, c, kp, ki;
  };
  static constexpr Row kRows[] = {
      {5, 10, 10.0, 0.2}, {5, 20, 10.0, 10.0}, {5, 50, 10.0, 10.0},
      {20, 10, 8.0, 1.0}, {20, 20, 5.0, 10.0}, {20, 50, 5.0, 10.0},
  };
  for (const Row& row : kRows) {
    if (row.r == resistance && row.c == compliance) {
      return PidCoefficients{row.kp, row.ki, 0.0, kUnboundedWindow};
    }
  }
  throw ConfigInvalid("no reference PID for this lung setting");
}

std::vector<double> standard_gain_values() {
  return {0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9,
          1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0};
}

GridSpec GridSpec::standard(bool search_d) {
  GridSpec g;
  g.kp = standard_gain_values();
  g.ki = standard_gain_values();
  g.kd = search_d ? standard_gain_values() : std::vector<double>{0.0};
  return g;
}

std::size_t best_row(std::span<const GridRow> rows) {
  if (rows.empty()) throw std::invalid_argument("empty grid table");
  std::size_t best = 0;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const double s = rows[i].mean_score;
    const double b = rows[best].mean_score;
    if (s < b || (s == b && lexicographically_less(rows[i].coefficients,
                                                   rows[best].coefficients))) {
      best = i;
    }
  }
  return best;
}

GridResult grid_search(const PlantFactory& make_plant, const GridSpec& grid,
                       std::span<const Waveform> waveforms,
                       const GridOptions& options) {
  if (grid.size() == 0) throw std::invalid_argument("grid is empty");
  if (waveforms.empty()) throw std::invalid_argument("no waveforms");

  std::vector<PidCoefficients> points;
  points.reserve(grid.size());
  for (double kp : grid.kp) {
    for (double ki : grid.ki) {
      for (double kd : grid.kd) {
        PidCoefficients c{kp, ki, kd, options.window};
        c.validate();
        points.push_back(c);
      }
    }
  }
  std::sort(points.begin(), points.end(), lexicographically_less);

  GridResult result;
  result.table.resize(points.size());
  const Plant prototype = make_plant();
  ScoreOptions score_options;
  score_options.breaths = options.breaths;
  score_options.run = options.run;

  const auto evaluate = [&](std::size_t i) {
    const PidCoefficients c = points[i];
    const double u_max = options.run.u_max;
    const auto factory = [c, u_max] {
      return std::make_unique<PidController>(c, u_max);
    };
    ScoreBreakdown s =
        score_controller_detailed(factory, prototype, waveforms, score_options);
    result.table[i] = GridRow{c, std::move(s.per_waveform), s.mean};
  };

  const std::size_t jobs = std::max<std::size_t>(1, options.jobs);
  if (jobs == 1) {
    for (std::size_t i = 0; i < points.size(); ++i) evaluate(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> workers;
    for (std::size_t w = 0; w < jobs; ++w) {
      workers.emplace_back([&] {
        for (std::size_t i = next++; i < points.size(); i = next++) evaluate(i);
      });
    }
  }

  const std::size_t b = best_row(result.table);
  result.best = result.table[b].coefficients;
  result.best_score = result.table[b].mean_score;
  return result;
}

void write_grid_csv(std::ostream& os, const GridResult& result,
                    std::span<const Waveform> waveforms) {
  os << "kp,ki,kd";
  for (const Waveform& wf : waveforms) os << ',' << wf.id();
  os << ",mean\n";
  os.precision(17);
  for (const GridRow& row : result.table) {
    os << row.coefficients.kp << ',' << row.coefficients.ki << ','
       << row.coefficients.kd;
    for (double s : row.waveform_scores) os << ',' << s;
    os << ',' << row.mean_score << '\n';
  }
}

}  // namespace ventctl
