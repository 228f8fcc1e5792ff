#include "ventctl/trajectory_io.hpp"

#include <fstream>
#include <istream>
#include <ostream>
#include <string>

#include "ventctl/errors.hpp"

namespace ventctl {

using nlohmann::json;

namespace {

template <typename T>
T field_or(const json& j, const char* key, T fallback) {
  const auto it = j.find(key);
  if (it == j.end()) return fallback;
  if (!it->is_number()) {
    throw ConfigInvalid(std::string("field '") + key + "' must be a number");
  }
  return it->get<T>();
}

}  // namespace

json to_json(const LungSetting& ls) {
  return json{{"R", ls.resistance},     {"C", ls.compliance},
              {"p0", ls.p0},           {"r0", ls.r0},
              {"p_supply", ls.p_supply}, {"k_valve", ls.k_valve},
              {"flow_scale", ls.flow_scale}};
}

LungSetting lung_setting_from_json(const json& j) {
  if (!j.is_object()) throw ConfigInvalid("lung setting must be an object");
  if (!j.contains("R") || !j.contains("C")) {
    throw ConfigInvalid("lung setting requires R and C");
  }
  LungSetting ls;
  ls.resistance = field_or(j, "R", ls.resistance);
  ls.compliance = field_or(j, "C", ls.compliance);
  ls.p0 = field_or(j, "p0", ls.p0);
  ls.r0 = field_or(j, "r0", ls.r0);
  ls.p_supply = field_or(j, "p_supply", ls.p_supply);
  ls.k_valve = field_or(j, "k_valve", ls.k_valve);
  ls.flow_scale = field_or(j, "flow_scale", ls.flow_scale);
  ls.validate();
  return ls;
}

json to_json(const Waveform& wf) {
  return json{{"pip", wf.pip},       {"peep", wf.peep}, {"t_insp", wf.t_insp},
              {"t_exp", wf.t_exp},   {"dt", wf.dt}};
}

Waveform waveform_from_json(const json& j) {
  if (!j.is_object()) throw ConfigInvalid("waveform must be an object");
  Waveform wf;
  wf.pip = field_or(j, "pip", wf.pip);
  wf.peep = field_or(j, "peep", wf.peep);
  wf.t_insp = field_or(j, "t_insp", wf.t_insp);
  wf.t_exp = field_or(j, "t_exp", wf.t_exp);
  wf.dt = field_or(j, "dt", wf.dt);
  wf.validate();
  return wf;
}

void write_trajectory_jsonl(std::ostream& os, const Trajectory& traj,
                            const LungSetting& setting, const Waveform& wf,
                            const json& extra) {
  json header = json::object();
  if (extra.is_object()) header = extra;
  header["kind"] = "header";
  header["format"] = "ventctl-trajectory";
  header["version"] = kTrajectoryFormatVersion;
  header["setting_id"] = traj.setting_id;
  header["waveform_id"] = traj.waveform_id;
  header["dt"] = traj.dt;
  header["setting"] = to_json(setting);
  header["waveform"] = to_json(wf);
  os << header.dump() << '\n';
  for (const Sample& s : traj.samples) {
    const json line{{"t", s.t}, {"u", s.u}, {"p", s.p}, {"phase", phase_tag(s.phase)}};
    os << line.dump() << '\n';
  }
}

LoadedTrajectory read_trajectory_jsonl(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw ConfigInvalid("trajectory file is empty");
  LoadedTrajectory out;
  try {
    out.header = json::parse(line);
    if (out.header.value("kind", "") != "header" ||
        out.header.value("format", "") != "ventctl-trajectory") {
      throw ConfigInvalid("missing trajectory header line");
    }
    if (out.header.value("version", 0) != kTrajectoryFormatVersion) {
      throw ConfigInvalid("unsupported trajectory format version");
    }
    out.setting = lung_setting_from_json(out.header.at("setting"));
    out.waveform = waveform_from_json(out.header.at("waveform"));
    out.trajectory.setting_id = out.header.value("setting_id", out.setting.id());
    out.trajectory.waveform_id = out.header.value("waveform_id", out.waveform.id());
    out.trajectory.dt = out.header.value("dt", out.waveform.dt);
    while (std::getline(is, line)) {
      if (line.empty()) continue;
      const json j = json::parse(line);
      Sample s;
      s.t = j.at("t").get<double>();
      s.u = j.at("u").get<double>();
      s.p = j.at("p").get<double>();
      s.phase = phase_from_tag(j.at("phase").get<std::string>());
      out.trajectory.samples.push_back(s);
    }
  } catch (const json::exception& e) {
    throw ConfigInvalid(std::string("malformed trajectory: ") + e.what());
  }
  return out;
}

void save_trajectory(const std::filesystem::path& path, const Trajectory& traj,
                     const LungSetting& setting, const Waveform& wf,
                     const json& extra) {
  std::ofstream os(path);
  if (!os) throw Error("cannot write " + path.string());
  write_trajectory_jsonl(os, traj, setting, wf, extra);
}

LoadedTrajectory load_trajectory(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigInvalid("cannot read " + path.string());
  return read_trajectory_jsonl(is);
}

}  // namespace ventctl
