#include <benchmark/benchmark.h>

#include "gramtex/bilinear.hpp"
#include "gramtex/losses.hpp"
#include "gramtex/network.hpp"
#include "gramtex/quilting.hpp"
#include "gramtex/rng.hpp"
#include "gramtex/synthesis.hpp"
#include "gramtex/tensor.hpp"
#include "gramtex/textures.hpp"

namespace {

using namespace gramtex;

Tensor random_tensor(std::vector<std::size_t> dims, std::uint64_t seed) {
  CounterRng rng(seed);
  Tensor t(std::move(dims));
  for (double& v : t.values()) v = rng.normal();
  return t;
}

Tensor texture(std::size_t size, std::uint64_t seed) {
  CounterRng rng(seed);
  return render_texture(TextureKind::Weave, size, size, rng);
}

void BM_Conv2d(benchmark::State& state) {
  const auto size = static_cast<std::size_t>(state.range(0));
  const auto cin = static_cast<std::size_t>(state.range(1));
  const Tensor x = random_tensor({size, size, cin}, 1);
  const Tensor w = random_tensor({3, 3, cin, 2 * cin}, 2);
  const std::vector<double> b(2 * cin, 0.0);
  for (auto _ : state) benchmark::DoNotOptimize(conv2d(x, w, b, 1, 1));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(size * size * cin * cin * 18));
}
BENCHMARK(BM_Conv2d)->Args({32, 8})->Args({32, 32})->Args({64, 16});

void BM_ForwardCollect(benchmark::State& state) {
  const Network net = tex_net_small(1);
  const Tensor img = texture(static_cast<std::size_t>(state.range(0)), 3);
  const std::set<std::string> layers{"relu1_1", "relu2_1", "relu3_1", "relu4_1", "relu5_1"};
  for (auto _ : state) benchmark::DoNotOptimize(forward_collect(net, img, layers));
}
BENCHMARK(BM_ForwardCollect)->Arg(48)->Arg(96);

void BM_BackwardToInput(benchmark::State& state) {
  const Network net = tex_net_small(1);
  const Tensor img = texture(static_cast<std::size_t>(state.range(0)), 3);
  const auto acts = forward_collect(net, img, {"relu3_1"});
  const LayerGrads grads{{"relu3_1", random_tensor(acts.at("relu3_1").dims(), 4)}};
  for (auto _ : state) benchmark::DoNotOptimize(backward_to_input(net, acts, grads));
}
BENCHMARK(BM_BackwardToInput)->Arg(48)->Arg(96);

void BM_BilinearPool(benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0));
  const Tensor f = random_tensor({24, 24, c}, 5);
  for (auto _ : state) benchmark::DoNotOptimize(bilinear_pool(f));
}
BENCHMARK(BM_BilinearPool)->Arg(16)->Arg(64);

void BM_Quilt(benchmark::State& state) {
  const Tensor src = texture(64, 6);
  QuiltParams p;
  p.patch = static_cast<std::size_t>(state.range(0));
  p.out_h = p.out_w = 128;
  for (auto _ : state) benchmark::DoNotOptimize(quilt(src, p));
}
BENCHMARK(BM_Quilt)->Arg(12)->Arg(24)->Unit(benchmark::kMillisecond);

void BM_TotalObjective(benchmark::State& state) {
  const Network net = tex_net_small(1);
  const auto size = static_cast<std::size_t>(state.range(0));
  const Tensor src = texture(size, 7);
  SynthesisJob job;
  job.out_h = job.out_w = size;
  ObjectiveSpec spec;
  spec.texture = texture_targets(net, src, job);
  const Tensor x = texture(size, 8);
  for (auto _ : state) benchmark::DoNotOptimize(total_objective(net, x, spec));
}
BENCHMARK(BM_TotalObjective)->Arg(48)->Arg(96)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
