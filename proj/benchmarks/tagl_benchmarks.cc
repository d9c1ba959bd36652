/* Copyright 2026 The TAGL Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/
#include <random>
#include <vector>

#include <benchmark/benchmark.h>

#include "tagl/io.h"
#include "tagl/losses.h"
#include "tagl/phantom.h"
#include "tagl/tagl.h"
#include "tagl/trainer.h"

namespace tagl {
namespace {

ProbMap RandomMap(std::size_t side, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> v(side * side);
  for (double& x : v) x = u(rng);
  return ProbMap(GridShape(side, side), std::move(v));
}

void BM_TaglLoss(benchmark::State& state) {
  const std::size_t side = static_cast<std::size_t>(state.range(0));
  const ProbMap bg = RandomMap(side, 1), sg = RandomMap(side, 2);
  for (auto _ : state) benchmark::DoNotOptimize(tagl_loss(bg, sg, TaglConfig{}).loss);
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(side * side));
}
BENCHMARK(BM_TaglLoss)->Arg(32)->Arg(128)->Arg(256);

void BM_TaglGrad(benchmark::State& state) {
  const std::size_t side = static_cast<std::size_t>(state.range(0));
  const ProbMap bg = RandomMap(side, 3), sg = RandomMap(side, 4);
  for (auto _ : state) benchmark::DoNotOptimize(tagl_grad(bg, sg, TaglConfig{}));
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(side * side));
}
BENCHMARK(BM_TaglGrad)->Arg(32)->Arg(128)->Arg(256);

LogitStack RandomLogits(std::size_t side, std::size_t classes) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n(0.0, 2.0);
  std::vector<double> v(side * side * classes);
  for (double& x : v) x = n(rng);
  return LogitStack(GridShape(side, side), classes, std::move(v));
}

void BM_Softmax(benchmark::State& state) {
  const LogitStack z = RandomLogits(static_cast<std::size_t>(state.range(0)), kAspectsClasses);
  for (auto _ : state) benchmark::DoNotOptimize(softmax_pixelwise(z));
}
BENCHMARK(BM_Softmax)->Arg(64)->Arg(128);

void BM_CrossEntropy(benchmark::State& state) {
  const std::size_t side = static_cast<std::size_t>(state.range(0));
  const LogitStack z = RandomLogits(side, kAspectsClasses);
  const LabelMap t(GridShape(side, side), kAspectsClasses,
                   std::vector<std::uint8_t>(side * side, 3));
  for (auto _ : state) benchmark::DoNotOptimize(cross_entropy(z, t).loss);
}
BENCHMARK(BM_CrossEntropy)->Arg(64)->Arg(128);

// One training case of the default phantom through the full objective.
class ObjectiveFixture : public benchmark::Fixture {
 public:
  void SetUp(const benchmark::State&) override {
    if (!cases_.empty()) return;
    PhantomConfig cfg;
    const PhantomGenerator gen(cfg);
    for (std::uint64_t k = 0; k < 8; ++k) cases_.push_back(gen.sample(k));
    for (const PairedCase& c : cases_) batch_.push_back(&c);
    std::mt19937_64 rng(6);
    std::uniform_real_distribution<double> u(-0.5, 0.5);
    for (double& w : head_.mutable_weights()) w = u(rng);
  }

 protected:
  std::vector<PairedCase> cases_;
  std::vector<const PairedCase*> batch_;
  LinearHead head_ = LinearHead::Zeros();
};

BENCHMARK_F(ObjectiveFixture, Fused)(benchmark::State& state) {
  const TrainConfig cfg;
  for (auto _ : state) benchmark::DoNotOptimize(objective_and_gradient(head_, batch_, cfg));
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(batch_.size()));
}

BENCHMARK_F(ObjectiveFixture, Reference)(benchmark::State& state) {
  const TrainConfig cfg;
  for (auto _ : state) {
    benchmark::DoNotOptimize(reference_objective_and_gradient(head_, batch_, cfg));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(batch_.size()));
}

void BM_SampleCase(benchmark::State& state) {
  const PhantomGenerator gen{PhantomConfig{}};
  std::uint64_t k = 0;
  for (auto _ : state) benchmark::DoNotOptimize(gen.sample(k++));
}
BENCHMARK(BM_SampleCase);

void BM_NgridRoundTrip(benchmark::State& state) {
  const Grid<float> g(GridShape(128, 128), 7, 0.25f);
  for (auto _ : state) benchmark::DoNotOptimize(decode_ngrid(encode_ngrid(g)));
  state.SetBytesProcessed(state.iterations() * static_cast<int64_t>(g.size() * 4));
}
BENCHMARK(BM_NgridRoundTrip);

}  // namespace
}  // namespace tagl

BENCHMARK_MAIN();
