#pragma once

#include <stdexcept>
#include <string>

namespace ventctl {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A step would drive the lung volume to a non-positive value.
class NonPositiveVolume : public Error {
 public:
  NonPositiveVolume(double volume, double time);
  double volume() const noexcept { return volume_; }
  double time() const noexcept { return time_; }

 private:
  double volume_;
  double time_;
};

/// Pressure exceeded the plant's safety ceiling; the run is aborted.
class SafetyAbort : public Error {
 public:
  SafetyAbort(double time, double pressure);
  double time() const noexcept { return time_; }
  double pressure() const noexcept { return pressure_; }

 private:
  double time_;
  double pressure_;
};

class EmptyTrajectory : public Error {
 public:
  EmptyTrajectory() : Error("trajectory has no samples") {}
};

class ShapeMismatch : public Error {
 public:
  using Error::Error;
};

/// Backward pass attempted with a tape that no longer matches the network.
class StaleTape : public Error {
 public:
  using Error::Error;
};

class EpisodeTooShort : public Error {
 public:
  using Error::Error;
};

class DegenerateData : public Error {
 public:
  using Error::Error;
};

/// Episode loss blew past the divergence limit during controller training.
class DivergentLoss : public Error {
 public:
  DivergentLoss(double loss, double initial_loss, std::size_t epoch);
  double loss() const noexcept { return loss_; }
  double initial_loss() const noexcept { return initial_loss_; }
  std::size_t epoch() const noexcept { return epoch_; }

 private:
  double loss_;
  double initial_loss_;
  std::size_t epoch_;
};

class ConfigInvalid : public Error {
 public:
  using Error::Error;
};

class StageFailed : public Error {
 public:
  using Error::Error;
};

}  // namespace ventctl
