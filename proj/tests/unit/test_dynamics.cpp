#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "ventctl/dynamics.hpp"
#include "ventctl/errors.hpp"

namespace ventctl {
namespace {

TEST(Waveform, TargetAtBreathPhases) {
  const Waveform wf{35.0, 5.0, 1.0, 2.0, 0.03};
  EXPECT_DOUBLE_EQ(waveform_target(0.0, wf), 35.0);
  EXPECT_DOUBLE_EQ(waveform_target(1.5, wf), 5.0);
  EXPECT_DOUBLE_EQ(waveform_target(3.0, wf), 35.0);
}

TEST(Waveform, TargetIsPeriodicWithTwoValues) {
  const Waveform wf{25.0, 5.0, 1.0, 2.0, 0.03};
  for (int k = 0; k < 400; ++k) {
    const double t = k * 0.0137;
    const double v = waveform_target(t, wf);
    EXPECT_TRUE(v == wf.pip || v == wf.peep);
    EXPECT_EQ(v, waveform_target(t + wf.period(), wf)) << t;
    EXPECT_EQ(v, waveform_target(t + 3.0 * wf.period(), wf)) << t;
  }
}

TEST(Waveform, StepCounts) {
  const Waveform wf;
  EXPECT_EQ(wf.steps_per_breath(), 100u);
  EXPECT_EQ(wf.inspiratory_steps(), 34u);
}

TEST(Waveform, ValidateRejectsInvariants) {
  EXPECT_THROW((Waveform{5.0, 5.0}.validate()), ConfigInvalid);
  EXPECT_THROW((Waveform{35.0, -1.0}.validate()), ConfigInvalid);
  EXPECT_THROW((Waveform{35.0, 5.0, 1.0, 2.0, 0.07}.validate()), ConfigInvalid);
}

TEST(LungSetting, IsoNamesAndCustomValues) {
  EXPECT_EQ(LungSetting::iso(20, 10).id(), "R20C10");
  EXPECT_THROW(LungSetting::iso(7, 10), ConfigInvalid);
  LungSetting custom;
  custom.resistance = 7.5;
  custom.compliance = 33.0;
  EXPECT_NO_THROW(custom.validate());
  custom.p_supply = 1.0;
  EXPECT_THROW(custom.validate(), ConfigInvalid);
}

TEST(LungSetting, RestRadiusHolds300mL) {
  const double r0 = LungSetting::default_rest_radius();
  EXPECT_NEAR(4.0 / 3.0 * std::numbers::pi * r0 * r0 * r0, 300.0, 1e-9);
}

TEST(Balloon, ZeroFlowIsIdentity) {
  const LungSetting ls;
  PlantState s{410.0, balloon_pressure(410.0, ls), 0.3, Phase::kInspiratory};
  const PlantState next = balloon_step(s, 0.0, 0.03, ls);
  EXPECT_EQ(next.volume, s.volume);
  EXPECT_EQ(next.pressure, s.pressure);
}

TEST(Balloon, RestRadiusGivesBaselinePressure) {
  const LungSetting ls;
  EXPECT_NEAR(balloon_pressure(balloon_rest_volume(ls), ls), ls.p0, 1e-12);
}

TEST(Balloon, DirectFormulaValue) {
  const LungSetting ls;
  PlantState s;
  s.volume = 400.0;
  // u = 2 control units is 20 mL/s at the default flow scale.
  const PlantState next = balloon_step(s, 2.0, 0.03, ls);
  EXPECT_NEAR(next.volume, 400.6, 1e-12);
  EXPECT_NEAR(next.pressure, 4.990070446302147, 1e-12);
}

TEST(Balloon, VolumeUpdateIsLinearInTime) {
  const LungSetting ls;
  PlantState s;
  s.volume = 350.0;
  const PlantState once = balloon_step(s, 40.0, 0.03, ls);
  const PlantState twice = balloon_step(balloon_step(s, 40.0, 0.015, ls), 40.0, 0.015, ls);
  EXPECT_NEAR(once.volume, twice.volume, 1e-12);
}

TEST(Rc, EmptyLungNoFlow) {
  const LungSetting ls;
  const PlantState next = rc_step(PlantState{}, 0.0, 0.03, ls);
  EXPECT_DOUBLE_EQ(next.pressure, ls.p0);
}

TEST(Rc, DirectFormulaValue) {
  const LungSetting ls = LungSetting::iso(5, 50);
  PlantState s;
  s.volume = 500.0;
  const PlantState next = rc_step(s, 30.0, 0.03, ls);
  EXPECT_NEAR(next.volume, 509.0, 1e-12);
  EXPECT_NEAR(next.pressure, 16.68, 1e-12);
}

TEST(Rc, ResistiveTermDoublesWithFlow) {
  const LungSetting ls = LungSetting::iso(20, 20);
  PlantState s;
  s.volume = 120.0;
  const auto resistive = [&](double u) {
    const PlantState n = rc_step(s, u, 0.03, ls);
    return n.pressure - ls.p0 - n.volume / ls.compliance;
  };
  EXPECT_NEAR(resistive(30.0), 2.0 * resistive(15.0), 1e-12);
}

TEST(Rc, PressureIsAffineWithSlopesOneOverCAndR) {
  const LungSetting ls = LungSetting::iso(20, 50);
  const double dt = 1e-9;  // isolate the volume path from the flow update
  const auto p = [&](double v, double u) {
    PlantState s;
    s.volume = v;
    return rc_step(s, u, dt, ls).pressure;
  };
  const double h = 1e-3;
  const double dpdv = (p(100.0 + h, 10.0) - p(100.0 - h, 10.0)) / (2 * h);
  EXPECT_NEAR(dpdv, 1.0 / ls.compliance, 1e-8);
  // One control unit is flow_scale mL/s, i.e. flow_scale * 1e-3 L/s.
  const double dpdu = (p(100.0, 10.0 + h) - p(100.0, 10.0 - h)) / (2 * h);
  EXPECT_NEAR(dpdu, ls.resistance * ls.flow_scale * 1e-3, 1e-6);
}

TEST(Valve, Examples) {
  LungSetting ls;
  EXPECT_EQ(valve_flow(20.0, 0.0, ls), 0.0);
  EXPECT_EQ(valve_flow(ls.p_supply, 0.7, ls), 0.0);
  ls.p_supply = 60.0;
  ls.k_valve = 1.0;
  EXPECT_NEAR(valve_flow(20.0, 0.5, ls), 2.5, 1e-12);
  EXPECT_THROW(valve_flow(20.0, 1.5, ls), std::invalid_argument);
}

TEST(Valve, FullOpeningIsFullScaleFlowFillingRcLungInHalfASecond) {
  const LungSetting ls = LungSetting::iso(5, 10);
  EXPECT_NEAR(valve_flow(ls.p0, 1.0, ls), kDefaultUMax, 1e-9);
  PlantState s{0.0, ls.p0, 0.0, Phase::kInspiratory};
  double t = 0.0;
  while (s.pressure < ls.p_supply && t < 5.0) {
    s = rc_step(s, kDefaultUMax, 0.03, ls);
    t += 0.03;
  }
  EXPECT_GT(t, 0.4);
  EXPECT_LT(t, 0.6);
}

TEST(Plant, ZeroControllerStaysAtBaseline) {
  Plant plant(LungSetting::iso(5, 50));
  ZeroController zero;
  const Trajectory traj = run_breath(plant, zero, Waveform{}, 1);
  for (const Sample& s : traj.samples) {
    if (s.phase == Phase::kInspiratory) EXPECT_DOUBLE_EQ(s.p, kDefaultPeep);
  }
}

TEST(Plant, ConstantControlRaisesPressureMonotonically) {
  Plant plant(LungSetting::iso(5, 50));
  ConstantController c(20.0);
  const Trajectory traj = run_breath(plant, c, Waveform{}, 1);
  double last = -1.0;
  for (const Sample& s : traj.samples) {
    if (s.phase != Phase::kInspiratory) break;
    EXPECT_GE(s.p, last);
    last = s.p;
  }
}

TEST(Plant, TrajectoryInvariants) {
  Plant plant(LungSetting::iso(20, 50));
  ConstantController c(250.0);  // clamped to u_max
  const Waveform wf{20.0};
  const Trajectory traj = run_breath(plant, c, wf, 2);
  ASSERT_EQ(traj.size(), 200u);
  for (std::size_t k = 0; k < traj.size(); ++k) {
    EXPECT_GE(traj.samples[k].u, 0.0);
    EXPECT_LE(traj.samples[k].u, kDefaultUMax);
    if (k > 0) EXPECT_NEAR(traj.samples[k].t - traj.samples[k - 1].t, wf.dt, 1e-12);
  }
}

TEST(Plant, ExpirationVentsTowardPeep) {
  Plant plant(LungSetting::iso(5, 10));
  ConstantController c(30.0);
  const Trajectory traj = run_breath(plant, c, Waveform{}, 1);
  EXPECT_NEAR(traj.samples.back().p, kDefaultPeep, 1e-3);
}

TEST(Plant, CeilingAborts) {
  PlantOptions opt;
  opt.p_max = 10.0;
  Plant plant(LungSetting::iso(5, 10), opt);
  ConstantController c(100.0);
  EXPECT_THROW(run_breath(plant, c, Waveform{}, 1), SafetyAbort);
}

TEST(Plant, NoisyRunsAreReproducible) {
  PlantOptions opt;
  opt.noise_sigma = 0.05;
  opt.seed = 99;
  Plant a(LungSetting::iso(5, 20), opt);
  Plant b(LungSetting::iso(5, 20), opt);
  ConstantController c(15.0);
  const Trajectory ta = run_breath(a, c, Waveform{}, 3);
  const Trajectory tb = run_breath(b, c, Waveform{}, 3);
  EXPECT_EQ(ta.samples, tb.samples);
  a.reset();
  EXPECT_EQ(run_breath(a, c, Waveform{}, 3).samples, ta.samples);
}

TEST(Episodes, OnePerBreath) {
  Plant plant(LungSetting::iso(5, 50));
  ConstantController c(10.0);
  const Trajectory traj = run_breath(plant, c, Waveform{}, 3);
  ASSERT_EQ(traj.size(), 300u);
  const auto eps = episode_split(traj);
  ASSERT_EQ(eps.size(), 3u);
  std::size_t total = 0;
  std::size_t insp = 0;
  for (const Episode& e : eps) {
    EXPECT_EQ(e.size(), 34u);
    total += e.size();
  }
  for (const Sample& s : traj.samples) insp += s.phase == Phase::kInspiratory;
  EXPECT_EQ(total, insp);
  EXPECT_TRUE(eps[0].context.empty());
  EXPECT_EQ(eps[1].context.size(), kDefaultContextLength);
  EXPECT_EQ(eps[1].context.back(), traj.samples[99].p);
}

TEST(Episodes, AllExpiratoryGivesNone) {
  Trajectory traj;
  for (int k = 0; k < 20; ++k) traj.samples.push_back({k * 0.03, 0.0, 5.0, Phase::kExpiratory});
  EXPECT_TRUE(episode_split(traj).empty());
  EXPECT_THROW(episode_split(Trajectory{}), EmptyTrajectory);
}

}  // namespace
}  // namespace ventctl
