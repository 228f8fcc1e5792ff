#include "ventctl/bench_config.hpp"

#include <algorithm>
#include <fstream>
#include <initializer_list>
#include <set>

#include "ventctl/errors.hpp"

namespace ventctl {

using nlohmann::json;

namespace {

std::uint64_t fnv1a(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Object view that rejects keys it was not told about.
class Section {
 public:
  Section(const json& j, std::string path, std::initializer_list<const char*> keys)
      : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigInvalid(path_ + " must be an object");
    const std::set<std::string> allowed(keys.begin(), keys.end());
    for (const auto& [key, value] : j_.items()) {
      if (!allowed.contains(key)) throw ConfigInvalid("unknown key " + path_ + "." + key);
    }
  }

  bool has(const char* key) const { return j_.contains(key); }
  const json& raw(const char* key) const { return j_.at(key); }
  std::string where(const char* key) const { return path_ + "." + key; }

  template <typename T>
  T get(const char* key, T fallback) const {
    if (!j_.contains(key)) return fallback;
    try {
      return j_.at(key).get<T>();
    } catch (const json::exception&) {
      throw ConfigInvalid(where(key) + " has the wrong type");
    }
  }

  template <typename T>
  T require(const char* key) const {
    if (!j_.contains(key)) throw ConfigInvalid("missing key " + where(key));
    return get<T>(key, T{});
  }

  double positive(const char* key, double fallback) const {
    const double v = get<double>(key, fallback);
    if (!(v > 0.0)) throw ConfigInvalid(where(key) + " must be positive");
    return v;
  }

  std::size_t count(const char* key, std::size_t fallback, std::size_t min = 0) const {
    if (j_.contains(key) && !(j_.at(key).is_number_unsigned() || j_.at(key).is_number_integer())) {
      throw ConfigInvalid(where(key) + " must be an integer");
    }
    const auto v = get<long long>(key, static_cast<long long>(fallback));
    if (v < static_cast<long long>(min)) {
      throw ConfigInvalid(where(key) + " must be >= " + std::to_string(min));
    }
    return static_cast<std::size_t>(v);
  }

 private:
  const json& j_;
  std::string path_;
};

Range parse_range(const Section& s, const char* key) {
  const json& r = s.raw(key);
  if (!r.is_array() || r.size() != 2 || !r[0].is_number() || !r[1].is_number()) {
    throw ConfigInvalid(s.where(key) + " must be a [min, max] pair");
  }
  return Range{r[0].get<double>(), r[1].get<double>()};
}

PidCoefficients parse_pid(const json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 3) throw ConfigInvalid(where + " must be a [P, I, D] triple");
  for (const json& v : j) {
    if (!v.is_number()) throw ConfigInvalid(where + " must hold numbers");
  }
  PidCoefficients c{j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), kUnboundedWindow};
  c.validate();
  return c;
}

std::vector<double> parse_gains(const Section& s, const char* key, std::vector<double> fallback) {
  if (!s.has(key)) return fallback;
  const json& v = s.raw(key);
  if (v.is_string() && v.get<std::string>() == "standard") return standard_gain_values();
  std::vector<double> out = s.get<std::vector<double>>(key, {});
  if (out.empty()) throw ConfigInvalid(s.where(key) + " must not be empty");
  return out;
}

SettingConfig parse_setting(const json& j, std::size_t index) {
  const std::string path = "settings[" + std::to_string(index) + "]";
  Section s(j, path, {"R", "C", "exploration", "simulator"});
  SettingConfig out;
  out.lung.resistance = s.require<double>("R");
  out.lung.compliance = s.require<double>("C");
  out.lung.validate();
  const double R = out.lung.resistance;
  const double C = out.lung.compliance;

  if (s.has("exploration")) {
    Section e(s.raw("exploration"), s.where("exploration"),
              {"base_pid", "boundary_control", "boundary_time", "triangle_control",
               "triangle_time", "p_boundary"});
    out.exploration.base = parse_pid(e.raw("base_pid"), e.where("base_pid"));
    out.exploration.boundary_control = parse_range(e, "boundary_control");
    out.exploration.boundary_time = parse_range(e, "boundary_time");
    out.exploration.triangle_control = parse_range(e, "triangle_control");
    out.exploration.triangle_time = parse_range(e, "triangle_time");
    out.exploration.p_boundary = e.get<double>("p_boundary", 0.25);
  } else {
    try {
      out.exploration = ExplorationConfig::reference(R, C);
    } catch (const ConfigInvalid&) {
      throw ConfigInvalid(path + " (" + out.lung.id() + ") needs an exploration block");
    }
  }

  bool have_default = true;
  try {
    out.architecture = desk_architecture(R, C);
  } catch (const ConfigInvalid&) {
    have_default = false;
  }
  if (s.has("simulator")) {
    Section a(s.raw("simulator"), s.where("simulator"), {"depth", "width", "H_p", "H_c", "N_B"});
    if (!have_default) {
      for (const char* key : {"depth", "width", "H_p", "H_c", "N_B"}) {
        if (!a.has(key)) throw ConfigInvalid("missing key " + a.where(key));
      }
    }
    SimArchitecture& arch = out.architecture;
    arch.depth = a.count("depth", arch.depth, 1);
    arch.width = a.count("width", arch.width, 1);
    arch.features.pressure_history = a.count("H_p", arch.features.pressure_history, 1);
    arch.features.control_history = a.count("H_c", arch.features.control_history, 1);
    arch.boundary_models = a.count("N_B", arch.boundary_models, 0);
  } else if (!have_default) {
    throw ConfigInvalid(path + " (" + out.lung.id() + ") needs a simulator block");
  }
  out.architecture.validate();
  return out;
}

}  // namespace

std::string fnv1a_hex(const std::string& bytes) {
  static const char* digits = "0123456789abcdef";
  std::uint64_t h = fnv1a(bytes);
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = digits[h & 0xf];
    h >>= 4;
  }
  return out;
}

Rng derive_rng(std::uint64_t seed, const std::string& stage, const std::string& key) {
  const std::uint64_t a = fnv1a(stage);
  const std::uint64_t b = fnv1a(key);
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(a >> 32),
                    static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(b >> 32)};
  return Rng(seq);
}

std::vector<Waveform> ExperimentConfig::waveforms() const {
  return make_waveforms(pips, base_waveform);
}

const SettingConfig& ExperimentConfig::setting(const std::string& id) const {
  for (const SettingConfig& s : settings) {
    if (s.id() == id) return s;
  }
  throw ConfigInvalid("setting " + id + " is not part of the experiment");
}

std::string ExperimentConfig::hash() const {
  json canonical = document;
  canonical.erase("output_dir");
  canonical.erase("setting_filter");
  return fnv1a_hex(canonical.dump());
}

void ExperimentConfig::set_seed(std::uint64_t s) {
  seed = s;
  document["seed"] = s;
}

void ExperimentConfig::set_output_dir(const std::filesystem::path& dir) {
  output_dir = dir;
  document["output_dir"] = dir.string();
}

void ExperimentConfig::filter_settings(const std::vector<std::string>& ids) {
  if (ids.empty()) return;
  std::vector<SettingConfig> kept;
  for (const std::string& id : ids) kept.push_back(setting(id));
  settings = std::move(kept);
}

ExperimentConfig parse_experiment_config(const json& j) {
  Section top(j, "config",
              {"name", "seed", "output_dir", "plant", "waveform", "settings", "collection",
               "simulator_training", "pid_grid", "controller", "robustness",
               "sample_efficiency", "open_loop_distance", "balloon_transfer",
               "setting_filter"});
  ExperimentConfig cfg;
  cfg.document = j;
  cfg.name = top.get<std::string>("name", cfg.name);
  if (!top.has("seed")) throw ConfigInvalid("missing key config.seed (seeds must be explicit)");
  cfg.seed = top.get<std::uint64_t>("seed", 0);
  cfg.output_dir = top.get<std::string>("output_dir", cfg.output_dir.string());

  if (top.has("plant")) {
    Section p(top.raw("plant"), "plant", {"model", "dt", "p_max", "noise_sigma"});
    cfg.plant.model = plant_model_from_name(p.get<std::string>("model", "rc"));
    cfg.plant.dt = p.positive("dt", kDefaultDt);
    cfg.plant.p_max = p.positive("p_max", kDefaultPMax);
    cfg.plant.noise_sigma = p.get<double>("noise_sigma", 0.0);
    if (!(cfg.plant.noise_sigma >= 0.0)) throw ConfigInvalid("plant.noise_sigma must be >= 0");
  }

  {
    const json empty = json::object();
    Section w(top.has("waveform") ? top.raw("waveform") : empty, "waveform",
              {"pips", "peep", "t_insp", "t_exp"});
    const auto defaults = default_pips();
    cfg.pips = w.get<std::vector<double>>("pips", {defaults.begin(), defaults.end()});
    if (cfg.pips.empty()) throw ConfigInvalid("waveform.pips must not be empty");
    cfg.base_waveform.peep = w.get<double>("peep", kDefaultPeep);
    cfg.base_waveform.t_insp = w.positive("t_insp", 1.0);
    cfg.base_waveform.t_exp = w.positive("t_exp", 2.0);
    cfg.base_waveform.dt = cfg.plant.dt;
    cfg.waveforms();  // validates every PIP against the timing
  }

  if (!top.has("settings") || !top.raw("settings").is_array() || top.raw("settings").empty()) {
    throw ConfigInvalid("config.settings must be a non-empty array");
  }
  std::set<std::string> ids;
  for (std::size_t i = 0; i < top.raw("settings").size(); ++i) {
    SettingConfig s = parse_setting(top.raw("settings")[i], i);
    if (!ids.insert(s.id()).second) throw ConfigInvalid("duplicate setting " + s.id());
    for (const Waveform& wf : cfg.waveforms()) s.exploration.validate(wf);
    cfg.settings.push_back(std::move(s));
  }

  if (top.has("collection")) {
    Section c(top.raw("collection"), "collection",
              {"breaths_per_waveform", "heldout_fraction", "context_length"});
    cfg.breaths_per_waveform = c.count("breaths_per_waveform", cfg.breaths_per_waveform, 1);
    cfg.heldout_fraction = c.get<double>("heldout_fraction", cfg.heldout_fraction);
    if (!(cfg.heldout_fraction > 0.0 && cfg.heldout_fraction < 1.0)) {
      throw ConfigInvalid("collection.heldout_fraction must lie in (0, 1)");
    }
    cfg.context_length = c.count("context_length", cfg.context_length, 0);
  }
  std::size_t max_history = 0;
  for (const SettingConfig& s : cfg.settings) {
    max_history = std::max(max_history, s.architecture.features.pressure_history);
  }
  if (cfg.context_length + 1 < max_history) {
    throw ConfigInvalid("collection.context_length is shorter than the largest H_p - 1");
  }

  if (top.has("simulator_training")) {
    Section t(top.raw("simulator_training"), "simulator_training",
              {"epochs", "batch", "lr", "weight_decay"});
    cfg.simulator.epochs = t.count("epochs", cfg.simulator.epochs);
    cfg.simulator.batch = t.count("batch", cfg.simulator.batch, 1);
    cfg.simulator.lr = t.positive("lr", cfg.simulator.lr);
    cfg.simulator.weight_decay = t.get<double>("weight_decay", 0.0);
  }

  if (top.has("pid_grid")) {
    Section g(top.raw("pid_grid"), "pid_grid", {"kp", "ki", "kd", "breaths"});
    cfg.grid.kp = parse_gains(g, "kp", cfg.grid.kp);
    cfg.grid.ki = parse_gains(g, "ki", cfg.grid.ki);
    cfg.grid.kd = parse_gains(g, "kd", cfg.grid.kd);
    cfg.score_breaths = g.count("breaths", cfg.score_breaths, 2);
  }

  if (top.has("controller")) {
    Section c(top.raw("controller"), "controller",
              {"lambdas", "epochs", "lr", "weight_decay", "gradient_reset",
               "divergence_factor", "feature_window", "pressure_scale", "output_gain",
               "depth", "width"});
    ControllerConfig& cc = cfg.controller;
    cc.lambdas = c.get<std::vector<double>>("lambdas", cc.lambdas);
    if (cc.lambdas.empty()) throw ConfigInvalid("controller.lambdas must not be empty");
    for (double l : cc.lambdas) {
      if (!(l >= 0.0)) throw ConfigInvalid("controller.lambdas must be >= 0");
    }
    cc.training.epochs = c.count("epochs", cc.training.epochs);
    cc.training.lr = c.positive("lr", cc.training.lr);
    cc.training.weight_decay = c.get<double>("weight_decay", cc.training.weight_decay);
    const auto reset = c.get<std::string>("gradient_reset", "pair");
    if (reset == "pair") {
      cc.training.reset = GradientReset::kPerPair;
    } else if (reset == "epoch") {
      cc.training.reset = GradientReset::kPerEpoch;
    } else {
      throw ConfigInvalid("controller.gradient_reset must be 'pair' or 'epoch'");
    }
    cc.training.divergence_factor = c.positive("divergence_factor", cc.training.divergence_factor);
    cc.features.window = c.count("feature_window", cc.features.window, 1);
    cc.features.pressure_scale = c.positive("pressure_scale", cc.features.pressure_scale);
    cc.output_gain = c.positive("output_gain", cc.output_gain);
    cc.depth = c.count("depth", cc.depth, 1);
    cc.width = c.count("width", cc.width, 1);
  }

  if (top.has("robustness")) {
    Section r(top.raw("robustness"), "robustness", {"settings"});
    cfg.robustness_settings = r.get<std::vector<std::string>>("settings", {});
    for (const std::string& id : cfg.robustness_settings) cfg.setting(id);
  }

  if (top.has("sample_efficiency")) {
    Section s(top.raw("sample_efficiency"), "sample_efficiency",
              {"enabled", "setting", "base_pid", "lambda", "epochs", "tolerance", "reinforce"});
    SampleEfficiencyConfig& se = cfg.sample_efficiency;
    se.enabled = s.get<bool>("enabled", se.enabled);
    se.setting_id = s.get<std::string>("setting", se.setting_id);
    if (s.has("base_pid")) se.base = parse_pid(s.raw("base_pid"), s.where("base_pid"));
    se.lambda = s.get<double>("lambda", se.lambda);
    if (!(se.lambda >= 0.0)) throw ConfigInvalid("sample_efficiency.lambda must be >= 0");
    se.epochs = s.count("epochs", se.epochs);
    se.tolerance = s.positive("tolerance", se.tolerance);
    if (s.has("reinforce")) {
      Section r(s.raw("reinforce"), s.where("reinforce"),
                {"max_episodes", "sigma", "lr", "baseline_decay", "score_every"});
      se.reinforce.episodes = r.count("max_episodes", se.reinforce.episodes);
      se.reinforce.sigma = r.positive("sigma", se.reinforce.sigma);
      se.reinforce.lr = r.positive("lr", se.reinforce.lr);
      se.reinforce.baseline_decay = r.get<double>("baseline_decay", se.reinforce.baseline_decay);
      se.reinforce.score_every = r.count("score_every", se.reinforce.score_every, 1);
    }
    if (se.enabled) cfg.setting(se.setting_id);
  }
  if (top.has("open_loop_distance")) {
    Section d(top.raw("open_loop_distance"), "open_loop_distance", {"horizon", "samples"});
    cfg.distance.horizon = d.count("horizon", cfg.distance.horizon, 1);
    cfg.distance.samples = d.count("samples", cfg.distance.samples, 2);
  }
  cfg.balloon_transfer = top.get<bool>("balloon_transfer", false);

  if (top.has("setting_filter")) {
    cfg.filter_settings(top.get<std::vector<std::string>>("setting_filter", {}));
  }
  return cfg;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigInvalid("cannot open config file " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigInvalid("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return parse_experiment_config(j);
}

}  // namespace ventctl
