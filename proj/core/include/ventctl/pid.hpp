#pragma once

#include <cstddef>
#include <functional>
#include <iosfwd>
#include <limits>
#include <span>
#include <vector>

#include "ventctl/dynamics.hpp"

namespace ventctl {

/// Integral window meaning "every error since the last reset".
inline constexpr std::size_t kUnboundedWindow =
    std::numeric_limits<std::size_t>::max();

struct PidCoefficients {
  double kp = 0.0;
  double ki = 0.0;
  double kd = 0.0;
  /// The integral sums the current error and the `window` before it.
  std::size_t window = kUnboundedWindow;

  void validate() const;
  friend bool operator==(const PidCoefficients&, const PidCoefficients&) = default;
};

/// Lexicographic (kp, ki, kd); used for grid tie-breaking.
bool lexicographically_less(const PidCoefficients& a, const PidCoefficients& b);

/// Error history for one breath.
class PidState {
 public:
  explicit PidState(std::size_t window = kUnboundedWindow);

  void reset();
  void push(double error);

  double current() const { return current_; }
  double previous() const { return previous_; }
  double integral() const;
  std::size_t window() const { return window_; }
  std::size_t count() const { return count_; }

 private:
  std::size_t window_;
  std::vector<double> ring_;  // length window + 1 when bounded
  std::size_t head_ = 0;
  std::size_t count_ = 0;
  double running_ = 0.0;
  double current_ = 0.0;
  double previous_ = 0.0;
};

/// Pushes target - measured and returns the unclamped PID output.
double pid_raw(PidState& state, double target, double measured,
               const PidCoefficients& c);

/// pid_raw clamped to [0, u_max].
double pid_control(PidState& state, double target, double measured,
                   const PidCoefficients& c, double u_max = kDefaultUMax);

class PidController final : public Controller {
 public:
  explicit PidController(PidCoefficients c, double u_max = kDefaultUMax);
  void begin_breath() override { state_.reset(); }
  double act(double target, double measured, double t) override;
  const PidCoefficients& coefficients() const { return c_; }

 private:
  PidCoefficients c_;
  double u_max_;
  PidState state_;
};

/// Best coefficients reported for the physical test lung, keyed by (R, C).
/// Throws ConfigInvalid for settings outside that table.
PidCoefficients reference_best_pid(double resistance, double compliance);

/// Gain values 0.0..1.0 in steps of 0.1, then 2..10 in steps of 1.
std::vector<double> standard_gain_values();

struct GridSpec {
  std::vector<double> kp;
  std::vector<double> ki;
  std::vector<double> kd;

  /// P x I over the standard values with D fixed at 0, or the full P x I x D.
  static GridSpec standard(bool search_d = false);
  std::size_t size() const { return kp.size() * ki.size() * kd.size(); }
};

struct GridRow {
  PidCoefficients coefficients;
  std::vector<double> waveform_scores;
  double mean_score = 0.0;
};

struct GridResult {
  PidCoefficients best;
  double best_score = 0.0;
  std::vector<GridRow> table;  // lexicographic (kp, ki, kd) order
};

struct GridOptions {
  std::size_t breaths = 3;
  std::size_t jobs = 1;
  std::size_t window = kUnboundedWindow;
  RunOptions run;
};

using PlantFactory = std::function<Plant()>;

/// Exhaustive search; SafetyAbort counts as an infinite score. Ties go to the
/// lexicographically smallest (kp, ki, kd).
GridResult grid_search(const PlantFactory& make_plant, const GridSpec& grid,
                       std::span<const Waveform> waveforms,
                       const GridOptions& options = {});

/// Argmin over rows; exposed for aggregating tables across settings.
std::size_t best_row(std::span<const GridRow> rows);

/// Header: kp,ki,kd,<waveform ids...>,mean
void write_grid_csv(std::ostream& os, const GridResult& result,
                    std::span<const Waveform> waveforms);

}  // namespace ventctl
