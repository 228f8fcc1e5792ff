#include <algorithm>

#include <gtest/gtest.h>

#include "ventctl/errors.hpp"
#include "ventctl/explore.hpp"

namespace ventctl {
namespace {

TEST(Schedules, BoundaryStartsAtPeakAndDecaysToZero) {
  Rng rng(1);
  const ExplorationConfig cfg = ExplorationConfig::reference(5, 50);
  for (int i = 0; i < 50; ++i) {
    const AdditiveSchedule f = boundary_schedule(rng, cfg);
    EXPECT_EQ(f(0.0), f.peak);
    EXPECT_EQ(f(f.t_end), 0.0);
    EXPECT_EQ(f(f.t_end + 0.01), 0.0);
    EXPECT_GT(f.peak, 75.0);
    EXPECT_LT(f.peak, 100.0);
    EXPECT_GT(f.t_end, 1.0);
    EXPECT_LT(f.t_end, 1.5);
  }
}

TEST(Schedules, TriangleEndpointsAndApex) {
  Rng rng(2);
  const ExplorationConfig cfg = ExplorationConfig::reference(20, 20);
  EXPECT_EQ(cfg.triangle_control.lo, -20.0);
  EXPECT_EQ(cfg.triangle_control.hi, 40.0);
  EXPECT_EQ(cfg.triangle_time.lo, 0.1);
  EXPECT_EQ(cfg.triangle_time.hi, 0.5);
  for (int i = 0; i < 50; ++i) {
    const AdditiveSchedule f = triangular_schedule(rng, cfg);
    EXPECT_EQ(f(0.1), 0.0);
    EXPECT_NEAR(f(0.5), 0.0, 1e-12);
    EXPECT_NEAR(f(0.3), f.peak, 1e-12);
    EXPECT_GT(f.peak, -20.0);
    EXPECT_LT(f.peak, 40.0);
  }
}

TEST(Schedules, ContinuousAndZeroOutsideSupport) {
  Rng rng(3);
  const ExplorationConfig cfg = ExplorationConfig::reference(5, 20);
  for (int i = 0; i < 20; ++i) {
    for (const AdditiveSchedule& f : {boundary_schedule(rng, cfg), triangular_schedule(rng, cfg)}) {
      EXPECT_EQ(f(-0.1), 0.0);
      EXPECT_EQ(f(f.t_end + 1e-6), 0.0);
      const double h = 1e-7;
      for (double t = 0.0; t < 1.6; t += 0.013) {
        EXPECT_NEAR(f(t + h), f(t), 1e-4 * (1.0 + std::abs(f.peak))) << t;
      }
    }
  }
}

TEST(Explore, AppliedControlStaysInBounds) {
  ExplorationController c({10.0, 5.0, 0.0});
  AdditiveSchedule big{SchedulePolicy::kBoundary, 1000.0, 0.0, 1.0};
  c.set_schedule(big);
  c.begin_breath();
  EXPECT_EQ(c.act(35.0, 5.0, 0.0), kDefaultUMax);
  AdditiveSchedule negative{SchedulePolicy::kTriangular, -1000.0, 0.0, 1.0};
  c.set_schedule(negative);
  EXPECT_EQ(c.act(35.0, 5.0, 0.5), 0.0);
}

TEST(Explore, NegativeKickSubtractsFromPid) {
  ExplorationController perturbed({1.0, 0.0, 0.0});
  perturbed.set_schedule({SchedulePolicy::kTriangular, -4.0, 0.0, 1.0});
  perturbed.begin_breath();
  EXPECT_NEAR(perturbed.act(15.0, 5.0, 0.5), 6.0, 1e-12);
}

TEST(Explore, ValidateRejectsTriangleOutsideInspiration) {
  ExplorationConfig cfg = ExplorationConfig::reference(5, 50);
  cfg.triangle_time = {0.5, 1.2};
  EXPECT_THROW(cfg.validate(Waveform{}), ConfigInvalid);
  cfg = ExplorationConfig::reference(5, 50);
  cfg.p_boundary = 1.5;
  EXPECT_THROW(cfg.validate(Waveform{}), ConfigInvalid);
  EXPECT_NO_THROW(ExplorationConfig::reference(5, 50).validate(Waveform{}));
}

TEST(Collect, AllBoundaryWhenProbabilityIsOne) {
  ExplorationConfig cfg = ExplorationConfig::reference(5, 50);
  cfg.p_boundary = 1.0;
  Plant plant(LungSetting::iso(5, 50));
  Rng rng(5);
  const Dataset d = collect_dataset(plant, cfg, Waveform{20.0}, 20, rng);
  for (const AdditiveSchedule& s : d.schedules) EXPECT_EQ(s.policy, SchedulePolicy::kBoundary);
}

TEST(Collect, ZeroPerturbationEqualsBasePid) {
  ExplorationConfig cfg = ExplorationConfig::reference(20, 20);
  cfg.base = {1.0, 3.0, 0.0};
  cfg.boundary_control = {0.0, 0.0};
  cfg.triangle_control = {0.0, 0.0};
  PlantOptions opt;
  opt.noise_sigma = 0.05;
  opt.seed = 17;
  const Waveform wf{25.0};
  Plant explored(LungSetting::iso(20, 20), opt);
  Rng rng(8);
  const Dataset d = collect_dataset(explored, cfg, wf, 6, rng);
  Plant plain(LungSetting::iso(20, 20), opt);
  PidController pid(cfg.base);
  const Trajectory ref = run_breath(plain, pid, wf, 6);
  ASSERT_EQ(d.trajectory.size(), ref.size());
  for (std::size_t k = 0; k < ref.size(); ++k) {
    EXPECT_EQ(d.trajectory.samples[k].u, ref.samples[k].u) << k;
    EXPECT_EQ(d.trajectory.samples[k].p, ref.samples[k].p) << k;
    EXPECT_NEAR(d.trajectory.samples[k].t, ref.samples[k].t, 1e-9) << k;
  }
}

TEST(Collect, ReproducibleUnderSeed) {
  const ExplorationConfig cfg = ExplorationConfig::reference(5, 20);
  const auto run = [&] {
    Plant plant(LungSetting::iso(5, 20));
    Rng rng(21);
    return collect_dataset(plant, cfg, Waveform{30.0}, 15, rng);
  };
  EXPECT_EQ(run().trajectory.samples, run().trajectory.samples);
}

TEST(Collect, BoundaryFractionApproachesProbability) {
  ExplorationConfig cfg = ExplorationConfig::reference(20, 50);
  Plant plant(LungSetting::iso(20, 50));
  Rng rng(33);
  const Dataset d = collect_dataset(plant, cfg, Waveform{10.0}, 2000, rng);
  const auto boundary = std::count_if(d.schedules.begin(), d.schedules.end(), [](const auto& s) {
    return s.policy == SchedulePolicy::kBoundary;
  });
  EXPECT_NEAR(static_cast<double>(boundary) / 2000.0, cfg.p_boundary, 0.05);
}

TEST(Collect, WideControlsStayUnderCeiling) {
  const ExplorationConfig cfg = ExplorationConfig::reference(5, 50);
  Plant plant(LungSetting::iso(5, 50));
  Rng rng(44);
  const Dataset d = collect_dataset(plant, cfg, Waveform{20.0}, 500, rng);
  double umin = 1e9, umax = -1e9, pmax = 0.0;
  for (const Sample& s : d.trajectory.samples) {
    if (s.phase == Phase::kInspiratory) {
      umin = std::min(umin, s.u);
      umax = std::max(umax, s.u);
    }
    pmax = std::max(pmax, s.p);
  }
  EXPECT_LT(pmax, kDefaultPMax);
  EXPECT_GT(umax - umin, 50.0);
  EXPECT_EQ(d.episodes.size(), 500u - d.aborted.size());
}

TEST(Collect, AbortedBreathsAreDroppedContiguously) {
  ExplorationConfig cfg = ExplorationConfig::reference(5, 10);
  cfg.base = {10.0, 2.0, 0.0};
  PlantOptions opt;
  opt.p_max = 40.0;
  Plant plant(LungSetting::iso(5, 10), opt);
  Rng rng(9);
  const Dataset d = collect_dataset(plant, cfg, Waveform{35.0}, 40, rng);
  EXPECT_FALSE(d.aborted.empty());
  EXPECT_EQ(d.trajectory.size(), (40 - d.aborted.size()) * 100);
  for (std::size_t k = 1; k < d.trajectory.size(); ++k) {
    EXPECT_NEAR(d.trajectory.samples[k].t - d.trajectory.samples[k - 1].t, 0.03, 1e-9);
  }
  for (const Sample& s : d.trajectory.samples) EXPECT_LE(s.p, opt.p_max);
}

TEST(Explore, ConfigJsonRoundTrip) {
  const ExplorationConfig cfg = ExplorationConfig::reference(20, 10);
  const ExplorationConfig back = exploration_config_from_json(to_json(cfg));
  EXPECT_EQ(back.base, cfg.base);
  EXPECT_EQ(back.boundary_time.hi, cfg.boundary_time.hi);
  EXPECT_EQ(back.p_boundary, cfg.p_boundary);
}

}  // namespace
}  // namespace ventctl
