#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ventctl/dynamics.hpp"
#include "ventctl/explore.hpp"
#include "ventctl/pid.hpp"
#include "ventctl/policy.hpp"
#include "ventctl/simlearn.hpp"

namespace ventctl {

struct SettingConfig {
  LungSetting lung;
  ExplorationConfig exploration;
  SimArchitecture architecture;

  std::string id() const { return lung.id(); }
};

struct ControllerConfig {
  std::vector<double> lambdas{0.01, 0.1, 1.0};
  AnalyticTraining training;
  FeatureConfig features;
  double output_gain = 100.0;
  std::size_t depth = 2;
  std::size_t width = 32;
};

struct SampleEfficiencyConfig {
  bool enabled = true;
  std::string setting_id = "R5C50";
  PidCoefficients base{1.0, 0.0, 0.0};
  double lambda = 0.1;
  std::size_t epochs = 30;
  double tolerance = 0.1;  // "converged" = within this fraction of the final score
  ReinforceTraining reinforce{20000, 5.0, 1e-3, 0.9, 6, -1.0, 10.0, kDefaultUMax};
};

struct DistanceConfig {
  std::size_t horizon = 29;
  std::size_t samples = 200;
};

struct ExperimentConfig {
  std::string name = "experiment";
  std::uint64_t seed = 0;
  std::filesystem::path output_dir = "ventbench-out";
  PlantOptions plant;
  Waveform base_waveform;
  std::vector<double> pips;
  std::vector<SettingConfig> settings;
  std::size_t breaths_per_waveform = 84;
  double heldout_fraction = 0.2;
  std::size_t context_length = kDefaultContextLength;
  SimTraining simulator;
  GridSpec grid = GridSpec::standard();
  std::size_t score_breaths = 3;
  ControllerConfig controller;
  std::vector<std::string> robustness_settings;  // empty = every setting
  SampleEfficiencyConfig sample_efficiency;
  DistanceConfig distance;
  bool balloon_transfer = false;
  /// Parsed document with overrides applied; the hash is taken over it.
  nlohmann::json document;

  std::vector<Waveform> waveforms() const;
  const SettingConfig& setting(const std::string& id) const;
  /// 16 hex digits; FNV-1a over the canonical document without output_dir.
  std::string hash() const;

  void set_seed(std::uint64_t seed);
  void set_output_dir(const std::filesystem::path& dir);
  /// Keeps only the named settings; throws ConfigInvalid for unknown ids.
  void filter_settings(const std::vector<std::string>& ids);
};

/// Throws ConfigInvalid on unknown keys, wrong types, or violated invariants.
ExperimentConfig parse_experiment_config(const nlohmann::json& j);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

std::string fnv1a_hex(const std::string& bytes);

/// Independent stream for one (seed, stage, key) triple.
Rng derive_rng(std::uint64_t seed, const std::string& stage, const std::string& key = {});

}  // namespace ventctl
