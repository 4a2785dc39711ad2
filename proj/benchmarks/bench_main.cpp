#include <benchmark/benchmark.h>

#include "hinet/adam.hpp"
#include "hinet/crf.hpp"
#include "hinet/model.hpp"
#include "hinet/ops.hpp"

using namespace hinet;

namespace {

std::vector<double> noise(std::size_t n, Rng& rng) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.normal(0.0, 1.0);
  return v;
}

WindowBatch batch_for(const HiNetConfig& c, std::size_t n, Rng& rng) {
  WindowBatch b;
  b.x = Tensor(Shape{c.channels, n, c.observation_window}, noise(c.channels * n * c.observation_window, rng));
  for (std::size_t i = 0; i < n; ++i) {
    b.y.push_back(i % 10 == 0 ? 1.0 : 0.0);
    b.m.push_back(1.0);
    b.forecast_weight.push_back(1.0);
    for (std::size_t k = 0; k < c.observation_window; ++k) b.u.push_back(k % 7 == 0 ? 1 : 0);
  }
  return b;
}

void BM_Conv1dForward(benchmark::State& state) {
  const auto channels = static_cast<std::size_t>(state.range(0));
  const std::size_t n = 256, steps = 16;
  Rng rng(1);
  const Tensor x(Shape{channels, n, steps}, noise(channels * n * steps, rng));
  const Tensor k(Shape{channels, channels, 3}, noise(channels * channels * 3, rng));
  const Tensor b(Shape{channels}, noise(channels, rng));
  NoGradGuard g;
  for (auto _ : state) benchmark::DoNotOptimize(conv1d_causal(x, k, b, 4));
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * n));
}
BENCHMARK(BM_Conv1dForward)->Arg(16)->Arg(64);

void BM_Conv1dBackward(benchmark::State& state) {
  const auto channels = static_cast<std::size_t>(state.range(0));
  const std::size_t n = 256, steps = 16;
  Rng rng(2);
  Tensor x = Tensor::parameter({channels, n, steps}, noise(channels * n * steps, rng));
  Tensor k = Tensor::parameter({channels, channels, 3}, noise(channels * channels * 3, rng));
  Tensor b = Tensor::parameter({channels}, noise(channels, rng));
  for (auto _ : state) {
    backward(sum(conv1d_causal(x, k, b, 4)));
    benchmark::ClobberMemory();
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * n));
}
BENCHMARK(BM_Conv1dBackward)->Arg(16)->Arg(64);

void BM_InferStream(benchmark::State& state) {
  HiNetConfig c = HiNetConfig::defaults_for(Outcome::general);
  const auto params = HiNetParams::create(c);
  Rng rng(3);
  PreparedSurgery s;
  s.id = "bench";
  s.channels = c.channels;
  s.minutes = 512;
  s.values = noise(c.channels * s.minutes, rng);
  s.labels.y.assign(s.minutes, 0);
  s.labels.m.assign(s.minutes, 1);
  s.low_spo2.assign(s.minutes, 0);
  s.raw_spo2.assign(s.minutes, 97.0);
  for (auto _ : state) benchmark::DoNotOptimize(infer_stream(params, s));
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * s.minutes));
}
BENCHMARK(BM_InferStream)->Unit(benchmark::kMillisecond);

void BM_TrainStep(benchmark::State& state) {
  HiNetConfig c = HiNetConfig::defaults_for(state.range(0) ? Outcome::persistent : Outcome::general);
  const auto params = HiNetParams::create(c);
  auto trainable = params.trainable();
  Rng rng(4), drop(5);
  const WindowBatch b = batch_for(c, 256, rng);
  for (auto _ : state) {
    zero_grads(trainable);
    const auto l = batch_losses(params, b, Mode::train, &drop, 256.0);
    backward(l.total);
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * 256));
}
BENCHMARK(BM_TrainStep)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_CrfNll(benchmark::State& state) {
  const std::size_t n = 256, steps = static_cast<std::size_t>(state.range(0));
  Rng rng(6);
  const CrfParams crf = CrfParams::create(2);
  const Tensor em(Shape{2, n, steps}, noise(2 * n * steps, rng));
  std::vector<int> labels(n * steps);
  for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = (i / 5) % 2;
  NoGradGuard g;
  for (auto _ : state) benchmark::DoNotOptimize(crf_nll(em, labels, crf));
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * n));
}
BENCHMARK(BM_CrfNll)->Arg(16)->Arg(32);

void BM_CrfViterbi(benchmark::State& state) {
  const std::size_t n = 256, steps = static_cast<std::size_t>(state.range(0));
  Rng rng(7);
  const CrfParams crf = CrfParams::create(2);
  const Tensor em(Shape{2, n, steps}, noise(2 * n * steps, rng));
  for (auto _ : state) benchmark::DoNotOptimize(crf_viterbi_batch(em, crf));
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * n));
}
BENCHMARK(BM_CrfViterbi)->Arg(16)->Arg(32);

}  // namespace

BENCHMARK_MAIN();
