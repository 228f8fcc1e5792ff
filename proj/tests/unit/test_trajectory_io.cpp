#include <sstream>

#include <gtest/gtest.h>

#include "ventctl/errors.hpp"
#include "ventctl/trajectory_io.hpp"

namespace ventctl {
namespace {

Trajectory sample_trajectory() {
  Plant plant(LungSetting::iso(20, 10));
  ConstantController c(17.25);
  return run_breath(plant, c, Waveform{15.0}, 2);
}

TEST(TrajectoryIo, RoundTripIsExact) {
  const Trajectory traj = sample_trajectory();
  const Waveform wf{15.0};
  std::stringstream ss;
  write_trajectory_jsonl(ss, traj, LungSetting::iso(20, 10), wf, {{"note", "x"}});
  const LoadedTrajectory back = read_trajectory_jsonl(ss);
  EXPECT_EQ(back.trajectory.samples, traj.samples);
  EXPECT_EQ(back.setting.id(), "R20C10");
  EXPECT_EQ(back.waveform.pip, 15.0);
  EXPECT_EQ(back.header.at("note"), "x");
}

TEST(TrajectoryIo, OneSamplePerLineAfterHeader) {
  const Trajectory traj = sample_trajectory();
  std::stringstream ss;
  write_trajectory_jsonl(ss, traj, LungSetting::iso(20, 10), Waveform{15.0});
  std::string line;
  std::size_t lines = 0;
  std::getline(ss, line);
  EXPECT_NE(line.find("\"kind\":\"header\""), std::string::npos);
  while (std::getline(ss, line)) {
    const auto j = nlohmann::json::parse(line);
    EXPECT_TRUE(j.contains("t") && j.contains("u") && j.contains("p") && j.contains("phase"));
    ++lines;
  }
  EXPECT_EQ(lines, traj.size());
}

TEST(TrajectoryIo, MalformedInputIsRejected) {
  std::stringstream empty;
  EXPECT_THROW(read_trajectory_jsonl(empty), ConfigInvalid);
  std::stringstream bad("{\"kind\":\"header\",\"format\":\"other\"}\n");
  EXPECT_THROW(read_trajectory_jsonl(bad), ConfigInvalid);
}

TEST(TrajectoryIo, ConfigTypesRoundTrip) {
  LungSetting ls = LungSetting::iso(5, 20);
  ls.k_valve = 0.7;
  EXPECT_EQ(lung_setting_from_json(to_json(ls)).k_valve, 0.7);
  const Waveform wf{30.0, 6.0, 0.9, 2.1, 0.03};
  const Waveform back = waveform_from_json(to_json(wf));
  EXPECT_EQ(back.pip, 30.0);
  EXPECT_EQ(back.peep, 6.0);
  EXPECT_EQ(back.t_insp, 0.9);
}

}  // namespace
}  // namespace ventctl
