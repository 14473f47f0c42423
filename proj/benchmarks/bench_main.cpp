#include <benchmark/benchmark.h>

#include "vsseg/inference.hpp"
#include "vsseg/metrics.hpp"
#include "vsseg/mnet.hpp"
#include "vsseg/nn/ops.hpp"
#include "vsseg/rng.hpp"

using namespace vsseg;

namespace {

nn::Tensor random_tensor(const nn::Shape& shape, uint64_t seed) {
  nn::Tensor t(shape);
  SeededRng rng(seed);
  for (auto& v : t.values()) v = rng.uniform(-1.0, 1.0);
  return t;
}

Mask ball(const Dims& d, double r, double cx) {
  Mask m(d);
  for (int64_t z = 0; z < d.z; ++z)
    for (int64_t y = 0; y < d.y; ++y)
      for (int64_t x = 0; x < d.x; ++x) {
        const double dx = x - cx, dy = y - d.y / 2.0, dz = (z - d.z / 2.0) * 1.6;
        m.at(x, y, z) = dx * dx + dy * dy + dz * dz <= r * r;
      }
  return m;
}

}  // namespace

static void BM_Conv3x3x3(benchmark::State& state) {
  const int64_t c = state.range(0);
  const nn::Var x(random_tensor({1, c, 16, 32, 32}, 1)), w(random_tensor({c, c, 3, 3, 3}, 2)), b(nn::Tensor({c}));
  nn::NoGradGuard ng;
  for (auto _ : state) benchmark::DoNotOptimize(nn::conv3d(x, w, b, {{1, 1, 1}, {1, 1, 1}}));
  state.SetItemsProcessed(state.iterations() * 16 * 32 * 32 * c * c * 27);
}
BENCHMARK(BM_Conv3x3x3)->Arg(4)->Arg(16)->Unit(benchmark::kMillisecond);

static void BM_ConvBackward(benchmark::State& state) {
  const nn::Var x(random_tensor({1, 8, 16, 32, 32}, 1)), w(random_tensor({8, 8, 3, 3, 3}, 2), true),
      b(nn::Tensor({8}), true);
  for (auto _ : state) {
    const nn::Var y = nn::sum(nn::conv3d(x, w, b, {{1, 1, 1}, {1, 1, 1}}));
    y.backward();
  }
}
BENCHMARK(BM_ConvBackward)->Unit(benchmark::kMillisecond);

static void BM_MNetForward(benchmark::State& state) {
  const MNet net(MNetConfig::desk(), 1);
  const nn::Tensor x = random_tensor({1, 1, 16, 32, 32}, 3);
  for (auto _ : state) benchmark::DoNotOptimize(net.predict_probabilities(x));
}
BENCHMARK(BM_MNetForward)->Unit(benchmark::kMillisecond);

static void BM_Assd(benchmark::State& state) {
  const Dims d{96, 96, 48};
  const Mask a = ball(d, static_cast<double>(state.range(0)), 47.0), b = ball(d, state.range(0) - 1.0, 49.0);
  const auto method = state.range(1) ? DistanceMethod::distance_transform : DistanceMethod::brute_force;
  for (auto _ : state) benchmark::DoNotOptimize(assd(a, b, {0.6, 0.6, 1.0}, method));
}
BENCHMARK(BM_Assd)->Args({10, 0})->Args({10, 1})->Args({30, 1})->Unit(benchmark::kMillisecond);

static void BM_SlidingWindow(benchmark::State& state) {
  Volume3D v;
  v.data = Grid3<double>({96, 96, 32}, 0.0);
  v.domain = IntensityDomain::normalized;
  const WindowPredictor p = [](const nn::Tensor& x) {
    nn::Tensor t({1, 3, x.shape()[2], x.shape()[3], x.shape()[4]}, 1.0 / 3.0);
    return t;
  };
  for (auto _ : state) benchmark::DoNotOptimize(predict_volume(p, 3, v, {32, 32, 16}, {16, 16, 8}));
}
BENCHMARK(BM_SlidingWindow)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
