#pragma once

// Shared fixtures: small exploration datasets and simulators trained on them.

#include <map>
#include <memory>
#include <utility>
#include <vector>

#include "ventctl/explore.hpp"
#include "ventctl/simlearn.hpp"

namespace ventctl::testing {

inline std::vector<Episode> collect_episodes(double r, double c, std::size_t breaths,
                                             std::uint64_t seed) {
  const ExplorationConfig cfg = ExplorationConfig::reference(r, c);
  std::vector<Episode> out;
  Rng rng(seed);
  for (const Waveform& wf : make_waveforms(default_pips())) {
    Plant plant(LungSetting::iso(r, c));
    Dataset d = collect_dataset(plant, cfg, wf, breaths, rng);
    out.insert(out.end(), d.episodes.begin(), d.episodes.end());
  }
  return out;
}

struct TrainedSetting {
  EpisodeSplit split;
  SimulatorModel model;
};

/// Trained once per process for (r, c); desk architecture, full budget.
inline const TrainedSetting& trained_setting(double r, double c) {
  static std::map<std::pair<double, double>, std::unique_ptr<TrainedSetting>> cache;
  auto& slot = cache[{r, c}];
  if (!slot) {
    const std::vector<Episode> eps = collect_episodes(r, c, 84, 1234);
    Rng rng(99);
    EpisodeSplit split = split_episodes(eps, rng, 0.2);
    SimulatorModel model =
        train_simulator(split.train, desk_architecture(r, c), SimTraining{}, rng, "fixture");
    slot = std::make_unique<TrainedSetting>(TrainedSetting{std::move(split), std::move(model)});
  }
  return *slot;
}

/// A small network with random (nonzero) weights everywhere, for gradient tests.
inline SimulatorModel random_simulator(std::uint64_t seed, std::size_t hp = 5, std::size_t hc = 10,
                                       std::size_t boundary = 1) {
  Rng rng(seed);
  const SimFeaturization feat{hp, hc};
  const std::size_t widths[] = {feat.size(), 12, 12, 1};
  Normalizer norm = Normalizer::identity(feat.size());
  for (std::size_t i = 0; i < hp; ++i) {
    norm.mean[i] = 15.0;
    norm.scale[i] = 10.0;
  }
  for (std::size_t i = hp; i < feat.size(); ++i) {
    norm.mean[i] = 30.0;
    norm.scale[i] = 30.0;
  }
  std::vector<SubModel> b;
  for (std::size_t i = 0; i < boundary; ++i) b.push_back({Mlp(widths, rng), 0.5, 0.8});
  SubModel general{Mlp(widths, rng), 0.1, 0.4};
  return SimulatorModel(feat, norm, std::move(b), std::move(general), "random");
}

}  // namespace ventctl::testing
