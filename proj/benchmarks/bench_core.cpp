// SPDX-License-Identifier: Apache-2.0
#include <benchmark/benchmark.h>

#include <vector>

#include "keygaze/features.hpp"
#include "keygaze/network.hpp"
#include "keygaze/synthetic.hpp"
#include "keygaze/training.hpp"

namespace {

using namespace keygaze;

std::vector<LabeledSample> samples(std::size_t n) {
  SynthParams p;
  p.n_samples = n;
  p.seed = 1;
  return admit(generate_dataset(p).records).samples;
}

void BM_Features(benchmark::State& state) {
  SynthParams p;
  p.n_samples = 256;
  const auto records = generate_dataset(p).records;
  std::size_t i = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(build_feature_vector(records[i++ % records.size()].detections));
  }
}
BENCHMARK(BM_Features);

void BM_Forward(benchmark::State& state) {
  const auto s = samples(256);
  const ModelWeights w = init_weights(1);
  std::size_t i = 0;
  for (auto _ : state) benchmark::DoNotOptimize(forward(s[i++ % s.size()].features, w));
}
BENCHMARK(BM_Forward);

void BM_ForwardBackward(benchmark::State& state) {
  const auto s = samples(256);
  const ModelWeights w = init_weights(1);
  std::vector<double> grad(w.params.size());
  ForwardCache cache;
  std::size_t i = 0;
  for (auto _ : state) {
    forward(s[i++ % s.size()].features, w, &cache);
    backward(cache, w, {0.1, -0.2, 0.3}, grad);
    benchmark::DoNotOptimize(grad.data());
  }
}
BENCHMARK(BM_ForwardBackward);

void BM_BatchObjective(benchmark::State& state) {
  const auto s = samples(static_cast<std::size_t>(state.range(0)));
  const ModelWeights w = init_weights(1);
  std::vector<double> grad(w.params.size());
  for (auto _ : state) benchmark::DoNotOptimize(batch_objective(w, s, 1e-4, grad));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(s.size()));
}
BENCHMARK(BM_BatchObjective)->Arg(1024);

}  // namespace

BENCHMARK_MAIN();
