#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "pit/tiles.hpp"

namespace {

void BM_MatMulTile(benchmark::State& state, std::string impl) {
  static const pit::KernelRegistry reg = pit::register_builtin_kernels();
  const pit::TileKernel& k = *reg.find_impl(impl);
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<float> dist(-1.0f, 1.0f);
  std::vector<float> a(static_cast<std::size_t>(k.desc.a_size()));
  std::vector<float> b(static_cast<std::size_t>(k.desc.b_size()));
  std::vector<float> c(static_cast<std::size_t>(k.desc.c_size()));
  for (auto& v : a) v = dist(rng);
  for (auto& v : b) v = dist(rng);
  const auto fn = pit::tile_fn<float>(k);
  for (auto _ : state) {
    fn(a.data(), b.data(), c.data());
    benchmark::DoNotOptimize(c.data());
    benchmark::ClobberMemory();
  }
  state.counters["flops"] = benchmark::Counter(static_cast<double>(k.desc.flops()),
                                               benchmark::Counter::kIsIterationInvariantRate);
}

BENCHMARK_CAPTURE(BM_MatMulTile, 8x32x128, std::string("mm_blocked_8x32x128"));
BENCHMARK_CAPTURE(BM_MatMulTile, 16x32x128, std::string("mm_blocked_16x32x128"));
BENCHMARK_CAPTURE(BM_MatMulTile, 32x64x32, std::string("mm_blocked_32x64x32"));
BENCHMARK_CAPTURE(BM_MatMulTile, 32x32x32, std::string("mm_blocked_32x32x32"));

}  // namespace
