// Serial reference convolution vs the blocked OpenMP path, at the layer shapes of the
// desk-scale model (f_embed 32, f_infer 16) on a batch of 16 41x41 patches.
//
//   bench_conv --benchmark_filter=Forward
//   OMP_NUM_THREADS=4 bench_conv

#include <benchmark/benchmark.h>

#include "warship/kernels.hpp"
#include "warship/rng.hpp"

using namespace warship;

namespace {

struct Layer {
  const char* name;
  std::size_t in, out, k;
};

constexpr Layer kLayers[] = {
    {"conv1", 1, 32, 3},  {"conv2", 32, 32, 3},  {"shrink", 32, 16, 1},
    {"recursive", 16, 16, 3}, {"expand", 16, 32, 1}, {"to_image", 32, 1, 3},
};

constexpr std::size_t kBatch = 16;
constexpr std::size_t kSide = 41;

struct Operands {
  Tensor4<float> input;
  ConvParams<float> params;
  Tensor4<float> grad_out;
};

Operands make_operands(const Layer& l) {
  Rng rng(1);
  Operands o{Tensor4<float>(kBatch, l.in, kSide, kSide), ConvParams<float>(l.out, l.in, l.k),
             Tensor4<float>(kBatch, l.out, kSide, kSide)};
  for (auto& v : o.input.span()) v = static_cast<float>(rng.uniform());
  for (auto& v : o.params.weights.span()) v = static_cast<float>(rng.normal() * 0.1);
  for (auto& v : o.grad_out.span()) v = static_cast<float>(rng.uniform() - 0.5);
  return o;
}

void set_counters(benchmark::State& state, const Layer& l, double passes) {
  const double macs = static_cast<double>(kBatch * kSide * kSide * l.in * l.out * l.k * l.k);
  state.counters["FLOP/s"] =
      benchmark::Counter(2.0 * macs * passes, benchmark::Counter::kIsIterationInvariantRate, benchmark::Counter::kIs1000);
}

void BM_ForwardReference(benchmark::State& state) {
  const Layer& l = kLayers[state.range(0)];
  const auto o = make_operands(l);
  for (auto _ : state) benchmark::DoNotOptimize(reference::conv2d_forward(o.input, o.params));
  state.SetLabel(l.name);
  set_counters(state, l, 1);
}

void BM_ForwardFast(benchmark::State& state) {
  const Layer& l = kLayers[state.range(0)];
  const auto o = make_operands(l);
  for (auto _ : state) benchmark::DoNotOptimize(conv2d_forward(o.input, o.params));
  state.SetLabel(l.name);
  set_counters(state, l, 1);
}

void BM_BackwardReference(benchmark::State& state) {
  const Layer& l = kLayers[state.range(0)];
  const auto o = make_operands(l);
  for (auto _ : state) benchmark::DoNotOptimize(reference::conv2d_backward(o.input, o.params, o.grad_out));
  state.SetLabel(l.name);
  set_counters(state, l, 2);
}

void BM_BackwardFast(benchmark::State& state) {
  const Layer& l = kLayers[state.range(0)];
  const auto o = make_operands(l);
  for (auto _ : state) benchmark::DoNotOptimize(conv2d_backward(o.input, o.params, o.grad_out));
  state.SetLabel(l.name);
  set_counters(state, l, 2);
}

}  // namespace

BENCHMARK(BM_ForwardReference)->DenseRange(0, 5)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ForwardFast)->DenseRange(0, 5)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_BackwardReference)->DenseRange(0, 5)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_BackwardFast)->DenseRange(0, 5)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
