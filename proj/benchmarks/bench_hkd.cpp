// SPDX-License-Identifier: Apache-2.0
#include <benchmark/benchmark.h>

#include <vector>

#include "hkd/bsd.hpp"
#include "hkd/losses.hpp"
#include "hkd/ops.hpp"
#include "hkd/students.hpp"
#include "hkd/trainer.hpp"

namespace {

using namespace hkd;

Tensor random_tensor(const Shape& shape, Rng& rng, bool grad = false) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(-1.0, 1.0);
  return Tensor::from_data(shape, std::move(v), grad);
}

void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(1);
  const Tensor a = random_tensor({n, n}, rng);
  const Tensor b = random_tensor({n, n}, rng);
  for (auto _ : state) benchmark::DoNotOptimize(ops::matmul(a, b));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n * n * n));
}
BENCHMARK(BM_Matmul)->Arg(32)->Arg(64)->Arg(128);

void BM_Conv2dForwardBackward(benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0));
  Rng rng(2);
  const Tensor x = random_tensor({c, 32, 32}, rng, true);
  const Tensor w = random_tensor({c, c, 3, 3}, rng, true);
  const Tensor b = random_tensor({c}, rng, true);
  for (auto _ : state) {
    backward(ops::sum(ops::conv2d(x, w, b, 1, 1)));
    Tensor(x).zero_grad();
    Tensor(w).zero_grad();
    Tensor(b).zero_grad();
  }
}
BENCHMARK(BM_Conv2dForwardBackward)->Arg(8)->Arg(16);

void BM_SoftmaxLastAxis(benchmark::State& state) {
  Rng rng(3);
  const Tensor x = random_tensor({256, 256}, rng);
  for (auto _ : state) benchmark::DoNotOptimize(ops::softmax(x, 1));
}
BENCHMARK(BM_SoftmaxLastAxis);

void BM_CnnForward(benchmark::State& state) {
  const ArchConfig cfg;
  Rng rng(4);
  const StudentParams params = init_cnn_params(cfg, rng);
  const Tensor image = random_tensor({3, cfg.height, cfg.width}, rng);
  for (auto _ : state) benchmark::DoNotOptimize(cnn_forward(image, params, cfg));
}
BENCHMARK(BM_CnnForward);

void BM_VitForward(benchmark::State& state) {
  const ArchConfig cfg;
  Rng rng(5);
  const StudentParams params = init_vit_params(cfg, rng);
  const Tensor image = random_tensor({3, cfg.height, cfg.width}, rng);
  for (auto _ : state) benchmark::DoNotOptimize(vit_forward(image, params, cfg));
}
BENCHMARK(BM_VitForward);

void BM_PixelMaskAndLoss(benchmark::State& state) {
  Rng rng(6);
  const Tensor pc = random_tensor({4, 32, 32}, rng, true);
  const Tensor pv = random_tensor({4, 32, 32}, rng, true);
  LabelMap y{32, 32, std::vector<std::uint8_t>(32 * 32)};
  for (auto& l : y.labels) l = static_cast<std::uint8_t>(rng.integer(0, 3));
  for (auto _ : state) {
    const DirectionMask m = build_pixel_mask(pixel_ce(pc, y).map, pixel_ce(pv, y).map);
    benchmark::DoNotOptimize(pixel_loss(pc, pv, m));
  }
}
BENCHMARK(BM_PixelMaskAndLoss);

void BM_TrainStep(benchmark::State& state) {
  SynthSpec spec;
  spec.seed = 7;
  TrainConfig cfg;
  cfg.batch_size = static_cast<std::size_t>(state.range(0));
  cfg.max_iterations = 1u << 30;
  cfg.seed = 7;
  CollaborativeTrainer trainer(cfg, generate_dataset(spec, 32));
  for (auto _ : state) benchmark::DoNotOptimize(trainer.step());
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_TrainStep)->Arg(1)->Arg(8)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
