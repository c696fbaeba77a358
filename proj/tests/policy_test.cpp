#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "pit/error.hpp"
#include "pit/index.hpp"
#include "pit/policy.hpp"
#include "test_util.hpp"

namespace pit {
namespace {

const PitAxis kM{"m", 0};
const PitAxis kK{"k", 1};

TileKernelDescriptor matmul_tile(std::int64_t m, std::int64_t k, std::int64_t n) {
  const auto reg = register_builtin_kernels();
  const std::int64_t s[] = {m, k, n};
  return reg.find(OpKind::kMatMul, s)->desc;
}

// Cost proportional to tile FLOPs (1 ns per FLOP).
ProfileTable flop_profile(const KernelRegistry& reg) {
  ProfileTable t;
  t.fingerprint = "synthetic";
  for (const auto& k : reg.kernels()) {
    t.costs[profile_key(k.desc)] = static_cast<double>(k.desc.flops()) * 1e-9;
  }
  return t;
}

KernelRegistry subset(std::initializer_list<std::array<std::int64_t, 3>> shapes) {
  const auto all = register_builtin_kernels();
  KernelRegistry reg;
  for (const auto& s : shapes) reg.add(*all.find(OpKind::kMatMul, s));
  return reg;
}

TEST(GetMicroTile, RowAxis) {
  const auto c = get_micro_tile(matmul_tile(16, 32, 128), kM, Layout::kRowMajor);
  EXPECT_EQ(c.micro_tile, (Dims2{1, 32}));
  EXPECT_EQ(c.required_layout, Layout::kRowMajor);
  EXPECT_FALSE(c.layout_change);
}

TEST(GetMicroTile, ReductionAxisNeedsColumnMajor) {
  const auto c = get_micro_tile(matmul_tile(16, 32, 128), kK, Layout::kRowMajor);
  EXPECT_EQ(c.micro_tile, (Dims2{16, 1}));
  EXPECT_EQ(c.required_layout, Layout::kColMajor);
  EXPECT_TRUE(c.layout_change);
}

TEST(GetMicroTile, WideTile) {
  EXPECT_EQ(get_micro_tile(matmul_tile(32, 64, 32), kM, Layout::kRowMajor).micro_tile,
            (Dims2{1, 64}));
  EXPECT_EQ(get_micro_tile(matmul_tile(32, 64, 32), kK, Layout::kColMajor).micro_tile,
            (Dims2{32, 1}));
  EXPECT_TRUE(get_micro_tile(matmul_tile(32, 64, 32), kM, Layout::kColMajor).layout_change);
}

TEST(GetMicroTile, AxisOutsideSparseOperand) {
  EXPECT_THROW(get_micro_tile(matmul_tile(32, 64, 32), PitAxis{"n", 2}, Layout::kRowMajor),
               std::invalid_argument);
}

TEST(CoverCount, AllZero) {
  EXPECT_EQ(cover_count(SparsityAnnotation({64, 64}, {2, 2}), {1, 32}, 0), 0);
}

TEST(CoverCount, FullyDense) {
  EXPECT_EQ(cover_count(random_annotation({4096, 4096}, {1, 1}, 0.0, 1), {1, 32}, 0),
            4096 * 128);
}

TEST(CoverCount, IndependentBlocksFollowPowerLaw) {
  const auto ann = random_annotation({4096, 4096}, {2, 1}, 0.95, 7);
  const std::int64_t cover = cover_count(ann, {16, 1}, 1);
  const double cover_sparsity = 1.0 - static_cast<double>(cover) / (256.0 * 4096.0);
  EXPECT_NEAR(cover_sparsity, std::pow(0.95, 8), 0.01);
  EXPECT_NEAR(cover_sparsity * 100, 66.39, 1.0);
}

TEST(CoverCount, EqualsIndexTotalAndBruteForce) {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 500; ++trial) {
    const Dims2 shape{static_cast<std::int64_t>(rng() % 70 + 1), static_cast<std::int64_t>(rng() % 70 + 1)};
    const Dims2 g{static_cast<std::int64_t>(rng() % 6 + 1), static_cast<std::int64_t>(rng() % 6 + 1)};
    const Dims2 mt{static_cast<std::int64_t>(rng() % 10 + 1), static_cast<std::int64_t>(rng() % 10 + 1)};
    const int dim = static_cast<int>(rng() % 2);
    const auto ann = random_annotation(shape, g, (rng() % 101) / 100.0, rng());
    const auto per_group = cover_counts_per_group(ann, mt, dim);
    ASSERT_EQ(per_group, testing::brute_force_cover(ann, mt, dim)) << "trial " << trial;
    ASSERT_EQ(cover_count(ann, mt, dim), build_index(ann, mt, {"a", dim}, 1 + trial % 4).total());
  }
}

TEST(EstimatePlanCost, ZeroAnnotationCostsNothingForSparsePlans) {
  const auto reg = register_builtin_kernels();
  const auto prof = flop_profile(reg);
  const ProblemShape p{OpKind::kMatMul, {256, 256, 256}};
  const SparsityAnnotation zero({256, 256}, {1, 1});
  for (const auto& axis : {kM, kK}) {
    EXPECT_EQ(estimate_plan_cost(make_plan(p, matmul_tile(32, 64, 32), axis), zero, prof), 0.0);
  }
}

TEST(EstimatePlanCost, DenseClosedForm) {
  const auto reg = register_builtin_kernels();
  auto prof = flop_profile(reg);
  const auto tile = matmul_tile(32, 64, 32);
  const auto plan = make_plan({OpKind::kMatMul, {1024, 1024, 1024}}, tile, std::nullopt);
  const auto ann = random_annotation({1024, 1024}, {1, 1}, 0.5, 3);
  EXPECT_EQ(plan_launches(plan, ann), (1024 / 32) * (1024 / 64) * (1024 / 32));
  const double cost = estimate_plan_cost(plan, ann, prof);
  EXPECT_DOUBLE_EQ(cost, 32.0 * 16 * 32 * prof.cost(tile));
  prof.costs[profile_key(tile)] *= 2;
  EXPECT_DOUBLE_EQ(estimate_plan_cost(plan, ann, prof), 2 * cost);
}

TEST(EstimatePlanCost, SparseLaunchModel) {
  // Row axis, tile 32x64x32 on a 64x128x64 problem. Column block 0 holds
  // rows {0..39}, column block 1 holds row 5 only.
  SparsityAnnotation ann({64, 128}, {1, 64});
  for (int r = 0; r < 40; ++r) ann.set(r, 0);
  ann.set(5, 1);
  const auto plan = make_plan({OpKind::kMatMul, {64, 128, 64}}, matmul_tile(32, 64, 32), kM);
  // ceil(40/32) + ceil(1/32) = 3 row groups, times 2 column tiles.
  EXPECT_EQ(plan_launches(plan, ann), 6);
  EXPECT_THROW(plan_launches(plan, SparsityAnnotation({64, 64}, {1, 1})), ShapeError);
}

TEST(KernelSelection, ZeroSparsityFallsBackToDense) {
  const auto reg = register_builtin_kernels();
  const auto prof = flop_profile(reg);
  std::vector<SparsityAnnotation> samples{random_annotation({512, 512}, {1, 1}, 0.0, 1),
                                          random_annotation({512, 512}, {1, 1}, 0.0, 2)};
  const auto res = kernel_selection(parse_expr("C[m,n] += A[m,k] * B[k,n]"),
                                    {{"m", 512}, {"k", 512}, {"n", 512}}, samples, reg, prof);
  EXPECT_TRUE(res.best.is_dense());
}

TEST(KernelSelection, FlopProportionalPicksMatchingMicroTile) {
  const auto reg = subset({{8, 32, 128}, {16, 32, 128}, {32, 64, 32}});
  const auto prof = flop_profile(reg);
  std::vector<SparsityAnnotation> samples;
  for (std::uint64_t s = 0; s < 3; ++s) {
    samples.push_back(random_annotation({2048, 2048}, {8, 1}, 0.95, 100 + s));
  }
  const auto res = kernel_selection(parse_expr("C[m,n] += A[m,k] * B[k,n]"),
                                    {{"m", 2048}, {"k", 2048}, {"n", 2048}}, samples, reg, prof);
  ASSERT_FALSE(res.best.is_dense());
  EXPECT_EQ(res.best.pit_axis->symbol, "k");
  EXPECT_EQ(res.best.micro_tile, (Dims2{8, 1}));
  EXPECT_EQ(res.best.tile.shape, (std::vector<std::int64_t>{8, 32, 128}));
  EXPECT_EQ(res.best.sparse_layout, Layout::kColMajor);
  // 3 tiles x (dense + m + k).
  EXPECT_EQ(res.candidates.size(), 9u);
}

TEST(KernelSelection, CostIsSumOfPerSampleEstimates) {
  const auto reg = register_builtin_kernels();
  const auto prof = flop_profile(reg);
  std::vector<SparsityAnnotation> samples{random_annotation({256, 512}, {4, 1}, 0.9, 1),
                                          random_annotation({256, 512}, {4, 1}, 0.7, 2)};
  const auto res = kernel_selection(parse_expr("C[m,n] += A[m,k] * B[k,n]"),
                                    {{"m", 256}, {"k", 512}, {"n", 128}}, samples, reg, prof);
  for (const auto& c : res.candidates) {
    double sum = 0.0;
    for (const auto& s : samples) sum += estimate_plan_cost(c.plan, s, prof);
    EXPECT_EQ(c.cost, sum);
    EXPECT_EQ(c.plan.estimated_cost, sum / 2);
  }
}

TEST(KernelSelection, ArgminInvariantUnderCostScaling) {
  const auto reg = register_builtin_kernels();
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    ProfileTable prof;
    for (const auto& k : reg.kernels()) {
      prof.costs[profile_key(k.desc)] = 1e-6 * (1 + static_cast<double>(rng() % 1000) / 100.0);
    }
    ProfileTable scaled = prof;
    for (auto& [key, c] : scaled.costs) c *= 3.5;
    std::vector<SparsityAnnotation> samples{
        random_annotation({512, 512}, {1 + static_cast<std::int64_t>(rng() % 8), 1}, 0.9, rng())};
    const OperatorBinding op{OpKind::kMatMul, {OpKind::kMatMul, {512, 512, 256}}, "m", "k", {}};
    const auto a = kernel_selection(op, samples, reg, prof).best;
    const auto b = kernel_selection(op, samples, reg, scaled).best;
    EXPECT_EQ(a.tile, b.tile);
    EXPECT_EQ(a.pit_axis, b.pit_axis);
  }
}

TEST(KernelSelection, AddingNonZerosNeverLowersCost) {
  const auto reg = register_builtin_kernels();
  const auto prof = flop_profile(reg);
  const ProblemShape p{OpKind::kMatMul, {256, 256, 128}};
  std::mt19937_64 rng(8);
  auto ann = random_annotation({256, 256}, {2, 2}, 0.97, 5);
  for (int step = 0; step < 30; ++step) {
    auto denser = ann;
    for (int i = 0; i < 20; ++i) denser.set(rng() % 128, rng() % 128);
    for (const auto* k : reg.for_op(OpKind::kMatMul)) {
      for (const auto& axis : {std::optional<PitAxis>{}, std::optional<PitAxis>{kM},
                               std::optional<PitAxis>{kK}}) {
        const auto plan = make_plan(p, k->desc, axis);
        EXPECT_LE(estimate_plan_cost(plan, ann, prof), estimate_plan_cost(plan, denser, prof));
      }
    }
    ann = denser;
  }
}

TEST(KernelSelection, Errors) {
  const auto reg = register_builtin_kernels();
  const auto prof = flop_profile(reg);
  const std::vector<SparsityAnnotation> samples{SparsityAnnotation({64, 64}, {1, 1})};
  const auto expr = parse_expr("C[m,n] += A[m,k] * B[k,n]");
  const ExtentMap ext{{"m", 64}, {"k", 64}, {"n", 64}};
  EXPECT_THROW(kernel_selection(expr, ext, samples, KernelRegistry{}, prof), std::invalid_argument);
  EXPECT_THROW(kernel_selection(expr, ext, samples, reg, prof,
                                {.allow_dense = false, .only_axis = std::string("n")}),
               std::invalid_argument);
  EXPECT_THROW(kernel_selection(parse_expr("C[n,f,x,y] += A[n,m,x+i,y+j] * B[f,m,i,j]"),
                                {{"n", 1}, {"f", 1}, {"x", 1}, {"y", 1}, {"m", 1}, {"i", 1}, {"j", 1}},
                                samples, reg, prof),
               std::invalid_argument);
  EXPECT_THROW(kernel_selection(expr, ext, samples, reg, ProfileTable{}), std::invalid_argument);
}

TEST(KernelSelection, NoSamplesMeansDense) {
  const auto reg = register_builtin_kernels();
  const auto res = kernel_selection(parse_expr("C[m,n] += A[m,k] * B[k,n]"),
                                    {{"m", 64}, {"k", 64}, {"n", 64}}, {}, reg, flop_profile(reg));
  EXPECT_TRUE(res.best.is_dense());
}

TEST(KernelSelection, BatchMatMulUsesSlices) {
  const auto reg = register_builtin_kernels();
  const auto op = bind_operator(parse_expr("C[b,m,n] += A[b,m,k] * B[b,k,n]"),
                                {{"b", 4}, {"m", 128}, {"k", 64}, {"n", 32}});
  EXPECT_EQ(op.problem.extents, (std::vector<std::int64_t>{128, 64, 32}));
  EXPECT_EQ(op.independent_slice_axes, std::vector<std::string>{"b"});
}

TEST(KernelSelection, ReduceSum) {
  const auto reg = register_builtin_kernels();
  const auto prof = flop_profile(reg);
  const std::vector<std::int64_t> lengths{3, 200, 0, 17};
  const std::vector<SparsityAnnotation> samples{from_ragged_lengths(lengths, {4, 256})};
  const auto res = kernel_selection(parse_expr("C[p] += A[p,l]"), {{"p", 4}, {"l", 256}}, samples,
                                    reg, prof);
  ASSERT_FALSE(res.best.is_dense());
  EXPECT_EQ(res.best.pit_axis->symbol, "l");
  EXPECT_EQ(res.best.micro_tile, (Dims2{1, 1}));
}

TEST(PlanDump, Format) {
  auto plan = make_plan({OpKind::kMatMul, {64, 64, 128}}, matmul_tile(16, 32, 128), kM);
  plan.estimated_cost = 1.5e-6;
  EXPECT_EQ(plan.dump(),
            "plan op=matmul pit_axis=m microtile=1x32 tile=16x32x128 impl=mm_blocked_16x32x128 "
            "cost=1.5e-06");
  const auto dense = make_plan({OpKind::kMatMul, {64, 64, 128}}, matmul_tile(16, 32, 128), std::nullopt);
  EXPECT_NE(dense.dump().find("pit_axis=dense"), std::string::npos);
}

}  // namespace
}  // namespace pit
