// Copyright 2026 The R-Mix Authors
// SPDX-License-Identifier: Apache-2.0

#include <benchmark/benchmark.h>

#include <vector>

#include "rmix/kernels.hpp"
#include "rmix/mixers.hpp"
#include "rmix/netlib.hpp"
#include "rmix/rng.hpp"
#include "rmix/saliency.hpp"

namespace {

rmix::Tensor random_tensor(rmix::Shape shape, rmix::Rng& rng) {
  rmix::Tensor t(std::move(shape));
  for (double& v : t.data()) v = rng.uniform(-1.0, 1.0);
  return t;
}

void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  rmix::Rng rng(1);
  const rmix::Tensor a = random_tensor({n, n}, rng);
  const rmix::Tensor b = random_tensor({n, n}, rng);
  for (auto _ : state) benchmark::DoNotOptimize(rmix::matmul(a, b));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(2 * n * n * n));
}
BENCHMARK(BM_Matmul)->Arg(64)->Arg(256);

void BM_Conv2d(benchmark::State& state) {
  const auto batch = static_cast<std::size_t>(state.range(0));
  rmix::Rng rng(2);
  const rmix::Tensor x = random_tensor({batch, 16, 16, 16}, rng);
  const rmix::Tensor w = random_tensor({32, 16, 3, 3}, rng);
  const rmix::Tensor b = random_tensor({32}, rng);
  for (auto _ : state) benchmark::DoNotOptimize(rmix::conv2d(x, w, b, 1));
}
BENCHMARK(BM_Conv2d)->Arg(1)->Arg(100);

void BM_TrainStep(benchmark::State& state) {
  rmix::Rng rng(3);
  const rmix::Model model = rmix::make_small_cnn({3, 32, 10, {16, 32}, 64}, rng);
  const rmix::Tensor x = random_tensor({100, 3, 32, 32}, rng);
  std::vector<std::size_t> labels(100);
  for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = i % 10;
  const rmix::Tensor y = rmix::one_hot(labels, 10);
  for (auto _ : state) benchmark::DoNotOptimize(rmix::compute_gradients(model, x, y, rmix::LossKind::kSigmoidBce));
}
BENCHMARK(BM_TrainStep)->Unit(benchmark::kMillisecond);

void BM_SaliencyBatch(benchmark::State& state) {
  rmix::Rng rng(4);
  const rmix::Model model = rmix::make_small_cnn({3, 32, 10, {16, 32}, 64}, rng);
  const rmix::Tensor x = random_tensor({100, 3, 32, 32}, rng);
  std::vector<std::size_t> labels(100, 3);
  const rmix::Tensor y = rmix::one_hot(labels, 10);
  for (auto _ : state) benchmark::DoNotOptimize(rmix::saliency_maps(model, x, y));
}
BENCHMARK(BM_SaliencyBatch)->Unit(benchmark::kMillisecond);

void BM_MixBatch(benchmark::State& state) {
  rmix::Rng rng(5);
  const rmix::Tensor x = random_tensor({100, 3, 32, 32}, rng);
  std::vector<std::size_t> labels(100);
  for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = i % 10;
  const rmix::Tensor y = rmix::one_hot(labels, 10);
  std::vector<rmix::Tensor> maps;
  for (int i = 0; i < 100; ++i) {
    rmix::Tensor m({32, 32});
    for (double& v : m.data()) v = rng.uniform();
    maps.push_back(m);
  }
  rmix::MixPolicy policy;
  policy.variant = static_cast<rmix::MixVariant>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(rmix::mix_batch(x, y, policy, rng, maps));
}
BENCHMARK(BM_MixBatch)
    ->Arg(static_cast<int>(rmix::MixVariant::kRMix))
    ->Arg(static_cast<int>(rmix::MixVariant::kInputMixup))
    ->Arg(static_cast<int>(rmix::MixVariant::kCutMix));

}  // namespace

BENCHMARK_MAIN();
