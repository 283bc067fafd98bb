#include <benchmark/benchmark.h>

#include <vector>

#include "tsn/backbone.hpp"
#include "tsn/consensus.hpp"
#include "tsn/modality.hpp"
#include "tsn/ops.hpp"
#include "tsn/sampling.hpp"

namespace {

using namespace tsn;

void BM_Conv2d(benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0));
  Rng rng(1);
  const Tensor x = Tensor::randn({8, c, 32, 32}, rng);
  const Tensor w = Tensor::randn({2 * c, c, 3, 3}, rng, 0.1);
  for (auto _ : state) benchmark::DoNotOptimize(conv2d(x, w, 1, 1));
  state.SetItemsProcessed(state.iterations() * 8);
}
BENCHMARK(BM_Conv2d)->Arg(3)->Arg(10)->Arg(16);

void BM_ConsensusForward(benchmark::State& state) {
  const auto k = static_cast<std::size_t>(state.range(0));
  Rng rng(2);
  const Tensor s = Tensor::randn({k, 101}, rng);
  const ConsensusKind kind = state.range(1) ? ConsensusKind::max() : ConsensusKind::even_average();
  for (auto _ : state) benchmark::DoNotOptimize(consensus_forward(s.data(), k, 101, kind));
}
BENCHMARK(BM_ConsensusForward)->Args({3, 0})->Args({3, 1})->Args({25, 0})->Args({25, 1});

void BM_TsnStep(benchmark::State& state) {
  BackboneSpec spec;
  spec.input_channels = 10;
  spec.input_size = 32;
  spec.stages = {{8, 3, 1, true}, {16, 3, 1, true}, {32, 3, 1, false}};
  spec.num_classes = 4;
  Rng rng(3);
  BackboneModel model = BackboneModel::build(spec, rng);
  const Tensor snippets = Tensor::randn({16 * 3, 10, 32, 32}, rng);
  const std::vector<int> labels(16, 1);
  for (auto _ : state) {
    benchmark::DoNotOptimize(tsn_step(model, snippets, labels, 3, ConsensusKind::even_average(), Mode::Train, &rng));
  }
}
BENCHMARK(BM_TsnStep)->Unit(benchmark::kMillisecond);

void BM_TenCrop(benchmark::State& state) {
  Rng rng(4);
  const Tensor stack = Tensor::uniform({10, 256, 340}, rng, -0.5, 0.5);
  for (auto _ : state) benchmark::DoNotOptimize(tencrop(stack, StackKind::Flow, 32));
}
BENCHMARK(BM_TenCrop)->Unit(benchmark::kMillisecond);

void BM_EstimateHomography(benchmark::State& state) {
  const Homography h = Homography::normalized({1.01, 0.005, 2.0, -0.004, 0.99, -1.0, 1e-5, -1e-5, 1.0});
  const FlowField f = flow_from_homography(h, 256, 340);
  for (auto _ : state) {
    Rng rng(5);
    benchmark::DoNotOptimize(estimate_homography(f, rng));
  }
}
BENCHMARK(BM_EstimateHomography)->Unit(benchmark::kMillisecond);

void BM_FlowStack(benchmark::State& state) {
  const Homography h = Homography::translation(1.5, -0.5);
  std::vector<FlowField> flows(5, flow_from_homography(h, 256, 340));
  const std::vector<Homography> hs(5, h);
  for (auto _ : state) benchmark::DoNotOptimize(flow_stack(flows, state.range(0) ? hs : std::vector<Homography>{}));
}
BENCHMARK(BM_FlowStack)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
