// Parallel kernels against their serial references.

#include <benchmark/benchmark.h>

#include <random>

#include "lisr/kernels.hpp"

namespace {

using lisr::Shape;
using lisr::Tensor;
namespace k = lisr::kernels;

Tensor random_tensor(const Shape& s, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Tensor t(s);
  for (double& v : t.values()) v = u(rng);
  return t;
}

std::vector<double> random_vector(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-0.1, 0.1);
  std::vector<double> v(n);
  for (double& x : v) x = u(rng);
  return v;
}

struct ConvCase {
  Shape input;
  k::ConvGeometry geometry;
};

ConvCase conv_case(int size, int channels) {
  return {{channels, size, size, size}, {channels, channels, 3, 1, 1}};
}

template <bool Parallel>
void BM_ConvForward(benchmark::State& state) {
  const ConvCase c = conv_case(static_cast<int>(state.range(0)), static_cast<int>(state.range(1)));
  const Tensor x = random_tensor(c.input, 1);
  const auto w = random_vector(c.geometry.weight_count(), 2);
  const auto b = random_vector(c.geometry.out_channels, 3);
  for (auto _ : state) {
    Tensor y = Parallel ? k::conv3d_forward(x, w, b, c.geometry)
                        : k::reference::conv3d_forward(x, w, b, c.geometry);
    benchmark::DoNotOptimize(y.data());
  }
}

template <bool Parallel>
void BM_ConvBackwardInput(benchmark::State& state) {
  const ConvCase c = conv_case(static_cast<int>(state.range(0)), static_cast<int>(state.range(1)));
  const Tensor gy = random_tensor(c.geometry.output_shape(c.input), 4);
  const auto w = random_vector(c.geometry.weight_count(), 5);
  for (auto _ : state) {
    Tensor gx = Parallel ? k::conv3d_backward_input(gy, w, c.geometry, c.input)
                         : k::reference::conv3d_backward_input(gy, w, c.geometry, c.input);
    benchmark::DoNotOptimize(gx.data());
  }
}

template <bool Parallel>
void BM_ConvBackwardParams(benchmark::State& state) {
  const ConvCase c = conv_case(static_cast<int>(state.range(0)), static_cast<int>(state.range(1)));
  const Tensor x = random_tensor(c.input, 6);
  const Tensor gy = random_tensor(c.geometry.output_shape(c.input), 7);
  std::vector<double> gw(c.geometry.weight_count()), gb(c.geometry.out_channels);
  for (auto _ : state) {
    if (Parallel)
      k::conv3d_backward_params(x, gy, c.geometry, gw, gb);
    else
      k::reference::conv3d_backward_params(x, gy, c.geometry, gw, gb);
    benchmark::DoNotOptimize(gw.data());
  }
}

template <bool Parallel>
void BM_GaussianFilter(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const Tensor x = random_tensor({1, n, n, n}, 8);
  const auto taps = k::gaussian_taps(11, 1.5);
  for (auto _ : state) {
    Tensor y = Parallel ? k::filter3_valid(x, taps) : k::reference::filter3_valid(x, taps);
    benchmark::DoNotOptimize(y.data());
  }
}

void conv_args(benchmark::internal::Benchmark* b) {
  b->Args({16, 8})->Args({32, 4})->Args({32, 16})->Unit(benchmark::kMillisecond);
}

}  // namespace

BENCHMARK(BM_ConvForward<true>)->Apply(conv_args)->Name("conv_forward/parallel");
BENCHMARK(BM_ConvForward<false>)->Apply(conv_args)->Name("conv_forward/reference");
BENCHMARK(BM_ConvBackwardInput<true>)->Apply(conv_args)->Name("conv_backward_input/parallel");
BENCHMARK(BM_ConvBackwardInput<false>)->Apply(conv_args)->Name("conv_backward_input/reference");
BENCHMARK(BM_ConvBackwardParams<true>)->Apply(conv_args)->Name("conv_backward_params/parallel");
BENCHMARK(BM_ConvBackwardParams<false>)->Apply(conv_args)->Name("conv_backward_params/reference");
BENCHMARK(BM_GaussianFilter<true>)->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond)->Name("ssim_filter/parallel");
BENCHMARK(BM_GaussianFilter<false>)->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond)->Name("ssim_filter/reference");

BENCHMARK_MAIN();
