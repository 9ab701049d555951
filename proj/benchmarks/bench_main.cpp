#include <benchmark/benchmark.h>

#include <random>

#include "pmsense/accuracy_fit.hpp"
#include "pmsense/caf.hpp"
#include "pmsense/channel.hpp"
#include "pmsense/classifier.hpp"
#include "pmsense/rng.hpp"

using namespace pmsense;

namespace {

struct Traces {
  IqTrace reference, surveillance;
};

// n_frames of burst through a static path plus a moving one, 10 dB SNR.
Traces make_traces(std::int64_t n_frames) {
  const FrameSpec spec;
  const IqTrace tx = make_burst(spec, n_frames);
  ChannelConfig ref{{Path{1.0, 0.0, {}}}, 0.0, 0.1, 1};
  ChannelConfig surv{{Path{0.5, 2e-6, {}}, Path{0.3, 5e-6, DopplerTrajectory::Constant{120.0}}}, 0.0, 0.1, 2};
  return {apply_channel(tx, ref), apply_channel(tx, surv)};
}

void BM_SpectrogramDirect(benchmark::State& state) {
  const Traces t = make_traces(state.range(0));
  const CafGrid grid = CafGrid::make(1e6, 0.02, 0.01);
  for (auto _ : state) benchmark::DoNotOptimize(spectrogram(t.surveillance, t.reference, grid));
}
BENCHMARK(BM_SpectrogramDirect)->Arg(200)->Unit(benchmark::kMillisecond);

void BM_SpectrogramFast(benchmark::State& state) {
  const Traces t = make_traces(state.range(0));
  const CafGrid grid = CafGrid::make(1e6, 0.02, 0.01);
  const std::size_t b = batch_length_for(grid, 1e6, 216);
  for (auto _ : state) benchmark::DoNotOptimize(spectrogram_fast(t.surveillance, t.reference, grid, b));
}
BENCHMARK(BM_SpectrogramFast)->Arg(200)->Arg(9260)->Unit(benchmark::kMillisecond);

void BM_SpectrogramFastDefaultGrid(benchmark::State& state) {
  const Traces t = make_traces(9260);
  const CafGrid grid = CafGrid::make(1e6);
  const std::size_t b = batch_length_for(grid, 1e6, 216);
  for (auto _ : state) benchmark::DoNotOptimize(spectrogram_fast(t.surveillance, t.reference, grid, b));
}
BENCHMARK(BM_SpectrogramFastDefaultGrid)->Unit(benchmark::kMillisecond);

Tensor random_batch(int n, int size) {
  Rng rng(3);
  std::normal_distribution<double> g(0.0, 1.0);
  Tensor x(n, 1, size, size);
  for (double& v : x.data) v = g(rng);
  return x;
}

void BM_NetForwardBackward(benchmark::State& state) {
  ResidualNet net(ResidualNetConfig{});
  const Tensor x = random_batch(static_cast<int>(state.range(0)), 32);
  std::vector<int> y(static_cast<std::size_t>(x.n));
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = static_cast<int>(i % 3);
  for (auto _ : state) {
    net.zero_grad();
    Tensor grad;
    softmax_cross_entropy(net.forward(x, Mode::training), y, &grad);
    benchmark::DoNotOptimize(net.backward(grad));
  }
  state.SetItemsProcessed(state.iterations() * x.n);
}
BENCHMARK(BM_NetForwardBackward)->Arg(16)->Unit(benchmark::kMillisecond);

void BM_NetInference(benchmark::State& state) {
  ResidualNet net(ResidualNetConfig{});
  const Tensor x = random_batch(64, 32);
  for (auto _ : state) benchmark::DoNotOptimize(net.forward(x, Mode::inference));
  state.SetItemsProcessed(state.iterations() * x.n);
}
BENCHMARK(BM_NetInference)->Unit(benchmark::kMillisecond);

void BM_CurveFit(benchmark::State& state) {
  const AccuracyCurve ref{1.107, 0.0999, 0.7907};
  std::vector<AccuracyPoint> pts;
  for (double t : {0.25, 0.5, 1.0, 1.5, 2.0}) pts.push_back({t, eval_curve(ref, t).raw});
  for (auto _ : state) benchmark::DoNotOptimize(fit_accuracy_curve(pts));
}
BENCHMARK(BM_CurveFit);

}  // namespace

BENCHMARK_MAIN();
