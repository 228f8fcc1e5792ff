#include <random>
#include <vector>

#include <benchmark/benchmark.h>

#include "ventctl/dynamics.hpp"
#include "ventctl/nnet.hpp"
#include "ventctl/pid.hpp"
#include "ventctl/policy.hpp"
#include "ventctl/simlearn.hpp"

namespace {

using namespace ventctl;

void BM_PlantBreath(benchmark::State& state) {
  Plant plant(LungSetting::iso(5, 50));
  PidController pid({3.0, 2.0, 0.0});
  const Waveform wf{25.0};
  for (auto _ : state) {
    plant.reset();
    benchmark::DoNotOptimize(run_breath(plant, pid, wf, 1));
  }
}
BENCHMARK(BM_PlantBreath);

void BM_MlpForwardBackward(benchmark::State& state) {
  const auto width = static_cast<std::size_t>(state.range(0));
  Rng rng(1);
  const std::size_t widths[] = {15, width, width, 1};
  const Mlp net(widths, rng);
  const Mat x = Mat::Random(15, 64);
  const Mat dy = Mat::Ones(1, 64);
  for (auto _ : state) {
    Tape tape;
    net.forward(x, &tape);
    benchmark::DoNotOptimize(backward(net, tape, dy));
  }
}
BENCHMARK(BM_MlpForwardBackward)->Arg(32)->Arg(150);

SimulatorModel small_simulator() {
  Rng rng(2);
  const SimFeaturization feat{5, 10};
  const std::size_t widths[] = {feat.size(), 32, 32, 1};
  std::vector<SubModel> boundary;
  boundary.push_back({Mlp(widths, rng), 0.5, 0.5});
  return SimulatorModel(feat, Normalizer::identity(feat.size()), std::move(boundary),
                        SubModel{Mlp(widths, rng), 0.1, 0.3}, "bench");
}

void BM_ClosedLoopRollout(benchmark::State& state) {
  const bool with_grads = state.range(0) != 0;
  const SimulatorModel sim = small_simulator();
  Rng rng(3);
  const ControllerPolicy policy = ControllerPolicy::make({3.0, 2.0, 0.0}, 0.1, rng);
  const Waveform wf{25.0};
  const std::size_t steps = rollout_steps(wf);
  for (auto _ : state) {
    MlpGradients g = policy.correction.zero_gradients();
    benchmark::DoNotOptimize(closed_loop_rollout(policy, sim, wf, steps, with_grads ? &g : nullptr));
  }
}
BENCHMARK(BM_ClosedLoopRollout)->Arg(0)->Arg(1);

}  // namespace
BENCHMARK_MAIN();
