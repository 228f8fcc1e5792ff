#pragma once

// JSON-lines persistence for trajectories and JSON forms of the plant-side
// configuration types.
//
// Layout: the first line is a header object
//   {"kind":"header","format":"ventctl-trajectory","version":1,
//    "setting":{...},"waveform":{...}, ...extra}
// followed by one object per sample
//   {"t":0.03,"u":12.5,"p":5.0,"phase":"in"}

#include <filesystem>
#include <iosfwd>

#include <nlohmann/json.hpp>

#include "ventctl/dynamics.hpp"

namespace ventctl {

inline constexpr int kTrajectoryFormatVersion = 1;

nlohmann::json to_json(const LungSetting& ls);
LungSetting lung_setting_from_json(const nlohmann::json& j);

nlohmann::json to_json(const Waveform& wf);
Waveform waveform_from_json(const nlohmann::json& j);

void write_trajectory_jsonl(std::ostream& os, const Trajectory& traj,
                            const LungSetting& setting, const Waveform& wf,
                            const nlohmann::json& extra = nlohmann::json::object());

struct LoadedTrajectory {
  Trajectory trajectory;
  LungSetting setting;
  Waveform waveform;
  nlohmann::json header;
};

/// Throws ConfigInvalid on malformed input.
LoadedTrajectory read_trajectory_jsonl(std::istream& is);

void save_trajectory(const std::filesystem::path& path, const Trajectory& traj,
                     const LungSetting& setting, const Waveform& wf,
                     const nlohmann::json& extra = nlohmann::json::object());
LoadedTrajectory load_trajectory(const std::filesystem::path& path);

}  // namespace ventctl
