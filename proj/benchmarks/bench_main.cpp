#include <benchmark/benchmark.h>

#include <random>

#include "prp/attention.hpp"
#include "prp/config.hpp"
#include "prp/downstream.hpp"
#include "prp/layers.hpp"
#include "prp/training.hpp"
#include "prp/video.hpp"

using namespace prp;

namespace {

Tensor random_tensor(Shape shape, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n;
  Tensor t(std::move(shape));
  for (auto& v : t.values()) v = n(rng);
  return t;
}

void BM_Conv3dForward(benchmark::State& state) {
  const int64_t c = state.range(0);
  std::mt19937_64 rng(0);
  nn::Conv3d conv(c, c, {3, 3, 3}, {1, 1, 1}, {1, 1, 1}, true, rng);
  const Tensor x = random_tensor({8, c, 8, 32, 32}, 1);
  for (auto _ : state) benchmark::DoNotOptimize(conv.forward(x, nn::Mode::kTrain));
}
BENCHMARK(BM_Conv3dForward)->Arg(8)->Arg(16)->Unit(benchmark::kMillisecond);

void BM_Conv3dBackward(benchmark::State& state) {
  const int64_t c = state.range(0);
  std::mt19937_64 rng(0);
  nn::Conv3d conv(c, c, {3, 3, 3}, {1, 1, 1}, {1, 1, 1}, true, rng);
  const Tensor x = random_tensor({8, c, 8, 32, 32}, 1);
  const Tensor y = conv.forward(x, nn::Mode::kTrain);
  const Tensor g = random_tensor(y.shape(), 2);
  for (auto _ : state) benchmark::DoNotOptimize(conv.backward(g));
}
BENCHMARK(BM_Conv3dBackward)->Arg(8)->Arg(16)->Unit(benchmark::kMillisecond);

void BM_MotionAttention(benchmark::State& state) {
  video::SyntheticSpec spec;
  spec.frame_count = 16;
  const auto v = video::generate_synthetic_video(spec, 0);
  const auto params = profile_defaults("desk").train.attention;
  for (auto _ : state) benchmark::DoNotOptimize(attention::motion_attention(v.frames, params, {16, 32, 32}));
}
BENCHMARK(BM_MotionAttention)->Unit(benchmark::kMicrosecond);

void BM_RetrieveTopk(benchmark::State& state) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n;
  downstream::RetrievalIndex index;
  index.feature_dim = 512;
  for (int i = 0; i < state.range(0); ++i) {
    std::vector<double> f(512);
    for (auto& x : f) x = n(rng);
    index.entries.push_back({"v" + std::to_string(i), i % 101, f});
  }
  std::vector<double> q(512);
  for (auto& x : q) x = n(rng);
  const std::vector<int> ks{1, 5, 10, 20, 50};
  for (auto _ : state) benchmark::DoNotOptimize(downstream::retrieve_topk(index, q, 0, ks));
}
BENCHMARK(BM_RetrieveTopk)->Arg(1000)->Arg(10000)->Unit(benchmark::kMicrosecond);

void BM_DeskTrainStep(benchmark::State& state) {
  auto cfg = profile_defaults("desk").train;
  video::SyntheticSpec spec;
  spec.num_videos = 8;
  spec.frame_count = 72;
  const auto videos = video::generate_synthetic_corpus(spec);
  const auto batch = training::collate(sampling::sample_batch(videos, cfg.sampling, 8, 1, cfg.augment), cfg);
  models::PrpModel model(cfg.backbone, cfg.decoder, cfg.sampling.num_classes(), 0);
  optim::Sgd opt({cfg.learning_rate, cfg.momentum, cfg.weight_decay, cfg.grad_clip});
  for (auto _ : state) benchmark::DoNotOptimize(training::train_step(model, opt, batch, cfg));
}
BENCHMARK(BM_DeskTrainStep)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
