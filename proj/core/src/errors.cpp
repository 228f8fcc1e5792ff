#include "ventctl/errors.hpp"

#include <sstream>

namespace ventctl {

namespace {

std::string describe(const char* what, double a_value, const char* a_name,
                     double b_value, const char* b_name) {
  std::ostringstream os;
  os << what << " (" << a_name << "=" << a_value << ", " << b_name << "="
     << b_value << ")";
  return os.str();
}

}  // namespace

NonPositiveVolume::NonPositiveVolume(double volume, double time)
    : Error(describe("non-positive lung volume", volume, "v", time, "t")),
      volume_(volume),
      time_(time) {}

SafetyAbort::SafetyAbort(double time, double pressure)
    : Error(describe("safety ceiling exceeded", time, "t", pressure, "p")),
      time_(time),
      pressure_(pressure) {}

DivergentLoss::DivergentLoss(double loss, double initial_loss,
                             std::size_t epoch)
    : Error(describe("controller training diverged", loss, "loss",
                     initial_loss, "initial")),
      loss_(loss),
      initial_loss_(initial_loss),
      epoch_(epoch) {}

}  // namespace ventctl
