#include <benchmark/benchmark.h>

#include <random>

#include "amfusion/losses.hpp"
#include "amfusion/model.hpp"
#include "amfusion/ops.hpp"
#include "amfusion/synth.hpp"

using namespace amfusion;

namespace {

Tensor noise(Shape s, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Tensor t(s);
  for (double& v : t.values()) v = u(rng);
  return t;
}

void BM_Conv3x3(benchmark::State& state) {
  const int c = static_cast<int>(state.range(0));
  const int size = static_cast<int>(state.range(1));
  Rng rng(1);
  const Conv2d conv(c, c, 3, 1, 1, rng);
  const Var x = Var::constant(noise({4, c, size, size}, 2));
  NoGradGuard g;
  for (auto _ : state) benchmark::DoNotOptimize(conv(x).value().data());
}
BENCHMARK(BM_Conv3x3)->Args({16, 64})->Args({64, 16})->Args({256, 4});

void BM_ForwardInference(benchmark::State& state) {
  FusionConfig config;
  const FusionModel model(config);
  const int size = static_cast<int>(state.range(0));
  const SyntheticSample s = synthesize_pair(generate_scene(size, size, 3), sample_degradation(size, 3));
  for (auto _ : state) benchmark::DoNotOptimize(model.fuse_luminance(s.pair).data());
}
BENCHMARK(BM_ForwardInference)->Arg(64)->Arg(128)->Unit(benchmark::kMillisecond);

void BM_TrainStep(benchmark::State& state) {
  FusionConfig config;
  FusionModel model(config);
  const Tensor vis = noise({4, 3, 64, 64}, 4);
  const Tensor ir = noise({4, 1, 64, 64}, 5);
  const Tensor y = to_luminance(vis);
  for (auto _ : state) {
    const Var fused = model.forward(Var::constant(vis), Var::constant(ir)).fused;
    const LossTerms t = total_loss(LossInputs{fused, vis, y, ir}, config);
    backward(t.total);
    for (auto& p : model.parameters()) p.param->zero_grad();
  }
}
BENCHMARK(BM_TrainStep)->Unit(benchmark::kMillisecond);

void BM_TotalLoss(benchmark::State& state) {
  const Tensor vis = noise({4, 3, 64, 64}, 6);
  const Tensor ir = noise({4, 1, 64, 64}, 7);
  const Tensor y = to_luminance(vis);
  const Tensor f = noise({4, 1, 64, 64}, 8);
  NoGradGuard g;
  for (auto _ : state) {
    benchmark::DoNotOptimize(total_loss(LossInputs{Var::constant(f), vis, y, ir}, FusionConfig{}).report().total);
  }
}
BENCHMARK(BM_TotalLoss);

}  // namespace
BENCHMARK_MAIN();
