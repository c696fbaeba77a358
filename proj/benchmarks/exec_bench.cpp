#include <benchmark/benchmark.h>

#include <random>

#include "pit/exec.hpp"
#include "pit/index.hpp"
#include "pit/policy.hpp"
#include "pit/sparsity.hpp"

namespace {

const pit::KernelRegistry& registry() {
  static const pit::KernelRegistry reg = pit::register_builtin_kernels();
  return reg;
}

pit::DenseTensor<float> random_matrix(const pit::SparsityAnnotation& ann, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> dist(-1.0f, 1.0f);
  auto t = pit::DenseTensor<float>::matrix(ann.shape());
  const pit::Dims2 g = ann.granularity();
  for (std::int64_t r = 0; r < ann.shape().rows; ++r) {
    for (std::int64_t c = 0; c < ann.shape().cols; ++c) {
      if (ann.test(r / g.rows, c / g.cols)) t.at(r, c) = dist(rng);
    }
  }
  return t;
}

// Args: extent, zero ratio in percent, plan (0 dense, 1 row axis, 2 reduction axis).
void BM_SparseMatMul(benchmark::State& state) {
  const std::int64_t n = state.range(0);
  const double ratio = static_cast<double>(state.range(1)) / 100.0;
  const auto& tile = registry().find_impl("mm_blocked_32x64x32")->desc;
  std::optional<pit::PitAxis> axis;
  pit::Dims2 g{1, tile.shape[1]};
  if (state.range(2) == 1) axis = pit::PitAxis{"m", 0};
  if (state.range(2) == 2) {
    axis = pit::PitAxis{"k", 1};
    g = {tile.shape[0], 1};
  }
  const auto plan = pit::make_plan({pit::OpKind::kMatMul, {n, n, n}}, tile, axis);
  const auto ann = pit::random_annotation({n, n}, g, ratio, 1);
  const auto a = pit::to_layout(random_matrix(ann, 2), plan.sparse_layout);
  const auto b = random_matrix(pit::random_annotation({n, n}, {1, 1}, 0.0, 3), 4);
  const auto idx = axis ? pit::build_index(ann, plan.micro_tile, *axis) : pit::MicroTileIndex{};
  for (auto _ : state) {
    auto res = axis ? pit::run_sparse_matmul(plan, a, b, idx, registry())
                    : pit::run_sparse_matmul(plan, a, b, ann, registry());
    benchmark::DoNotOptimize(res.output.data());
  }
  state.SetLabel(plan.is_dense() ? "dense" : "pit:" + axis->symbol);
}

BENCHMARK(BM_SparseMatMul)
    ->ArgsProduct({{1024}, {0, 50, 90, 95, 99}, {0, 1, 2}})
    ->Unit(benchmark::kMillisecond);

void BM_BuildIndex(benchmark::State& state) {
  const auto ann = pit::random_annotation({4096, 4096}, {1, 32}, 0.95, 1);
  const int workers = static_cast<int>(state.range(0));
  for (auto _ : state) {
    auto idx = pit::build_index(ann, {1, 32}, {"m", 0}, workers);
    benchmark::DoNotOptimize(idx.total());
  }
}

BENCHMARK(BM_BuildIndex)->Arg(1)->Arg(2)->Arg(4)->Unit(benchmark::kMillisecond);

}  // namespace
