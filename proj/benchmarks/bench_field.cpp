#include <random>

#include <benchmark/benchmark.h>

#include "shimkit/net/train.hpp"
#include "shimkit/opt.hpp"
#include "shimkit/sim.hpp"

using namespace shimkit;
using field::cd;

namespace {

field::SliceSample desk_slice() {
  static const field::SliceSample sample = [] {
    sim::CoilArray array;
    sim::PhantomSpec phantom;
    const sim::Volume vol = sim::generate_volume(array, phantom, sim::WaveModel{});
    auto slices = sim::slice_and_mask(vol, phantom, 0, 1, 64, 1.0, 1e-3);
    return slices.at(0);
  }();
  return sample;
}

} // namespace

static void BM_forward_field(benchmark::State& state) {
  const auto s = desk_slice();
  const auto w = field::quadrature_weights(8);
  for (auto _ : state) {
    benchmark::DoNotOptimize(field::forward_field(s.b1, w));
  }
}
BENCHMARK(BM_forward_field);

static void BM_objective_gradient(benchmark::State& state) {
  const auto s = desk_slice();
  const auto sys = field::pack_masked(s.b1, s.mask, s.target);
  const auto w = field::quadrature_weights(8);
  for (auto _ : state) {
    benchmark::DoNotOptimize(opt::objective_gradient_packed(sys, w.values, 1e-12));
  }
}
BENCHMARK(BM_objective_gradient);

static void BM_mls_solve(benchmark::State& state) {
  const auto s = desk_slice();
  opt::MlsConfig cfg;
  for (auto _ : state) {
    benchmark::DoNotOptimize(opt::mls_variable_exchange(s, cfg));
  }
}
BENCHMARK(BM_mls_solve)->Unit(benchmark::kMillisecond);

static void BM_adam_single_start(benchmark::State& state) {
  const auto s = desk_slice();
  opt::AdamConfig cfg;
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        opt::adam_minimize(s.b1, s.mask, s.target, field::quadrature_weights(8), cfg));
  }
}
BENCHMARK(BM_adam_single_start)->Unit(benchmark::kMillisecond);

static void BM_predict(benchmark::State& state) {
  const auto s = desk_slice();
  net::NetConfig cfg;
  cfg.input_channels = 16;
  cfg.output_dim = 16;
  cfg.input_h = s.b1.height;
  cfg.input_w = s.b1.width;
  auto net = net::NetParams<float>::init(cfg);
  for (auto _ : state) {
    benchmark::DoNotOptimize(net::predict(net, s));
  }
}
BENCHMARK(BM_predict)->Unit(benchmark::kMillisecond);
