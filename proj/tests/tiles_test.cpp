#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "pit/error.hpp"
#include "pit/tiles.hpp"

namespace pit {
namespace {

const std::int64_t kShapeA[] = {16, 32, 128};
const std::int64_t kShapeB[] = {32, 64, 32};
const std::int64_t kShapeC[] = {7, 7, 7};

TEST(Registry, BuiltinLookups) {
  const auto reg = register_builtin_kernels();
  EXPECT_NE(reg.find(OpKind::kMatMul, kShapeA), nullptr);
  EXPECT_NE(reg.find(OpKind::kMatMul, kShapeB), nullptr);
  EXPECT_EQ(reg.find(OpKind::kMatMul, kShapeC), nullptr);
  const std::int64_t s8[] = {8, 32, 128};
  const std::int64_t s32[] = {32, 32, 32};
  EXPECT_NE(reg.find(OpKind::kMatMul, s8), nullptr);
  EXPECT_NE(reg.find(OpKind::kMatMul, s32), nullptr);
  EXPECT_GE(reg.for_op(OpKind::kMatMul).size(), 4u);
  for (const auto* k : reg.for_op(OpKind::kMatMul)) {
    EXPECT_EQ(k->desc.flops(), 2 * k->desc.shape[0] * k->desc.shape[1] * k->desc.shape[2]);
  }
}

TEST(Registry, DuplicateImplRejected) {
  auto reg = register_builtin_kernels();
  const TileKernel copy = *reg.find(OpKind::kMatMul, kShapeA);
  EXPECT_THROW(reg.add(copy), std::invalid_argument);
}

template <typename T>
std::vector<T> random_vec(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> d(-1.0, 1.0);
  std::vector<T> v(n);
  for (auto& x : v) x = static_cast<T>(d(rng));
  return v;
}

// Triple loop in double, independent of the blocked kernel.
template <typename T>
std::vector<double> naive_tile(const std::vector<T>& a, const std::vector<T>& b,
                               const std::vector<T>& c0, std::int64_t m, std::int64_t k,
                               std::int64_t n) {
  std::vector<double> c(c0.begin(), c0.end());
  for (std::int64_t i = 0; i < m; ++i)
    for (std::int64_t j = 0; j < n; ++j)
      for (std::int64_t p = 0; p < k; ++p) c[i * n + j] += double(a[i * k + p]) * double(b[p * n + j]);
  return c;
}

template <typename T>
double rel_err(const std::vector<T>& got, const std::vector<double>& ref) {
  double scale = 0, worst = 0;
  for (std::size_t i = 0; i < ref.size(); ++i) {
    scale = std::max(scale, std::abs(ref[i]));
    worst = std::max(worst, std::abs(double(got[i]) - ref[i]));
  }
  return worst / std::max(scale, 1e-6);
}

template <typename T>
void check_random_tiles(double tol) {
  const auto reg = register_builtin_kernels();
  std::mt19937_64 rng(42);
  for (const auto* kernel : reg.for_op(OpKind::kMatMul)) {
    const auto& s = kernel->desc.shape;
    for (int trial = 0; trial < 1000; ++trial) {
      const auto a = random_vec<T>(s[0] * s[1], rng);
      const auto b = random_vec<T>(s[1] * s[2], rng);
      auto c = random_vec<T>(s[0] * s[2], rng);
      const auto ref = naive_tile(a, b, c, s[0], s[1], s[2]);
      run_tile<T>(*kernel, a, b, c);
      ASSERT_LE(rel_err(c, ref), tol) << kernel->desc.impl_id << " trial " << trial;
    }
  }
}

TEST(RunTile, MatchesTripleLoopF64) { check_random_tiles<double>(1e-12); }
TEST(RunTile, MatchesTripleLoopF32) { check_random_tiles<float>(1e-5); }

TEST(RunTile, IdentityAddsLeadingRowsOfB) {
  const auto reg = register_builtin_kernels();
  const auto& k = *reg.find(OpKind::kMatMul, kShapeA);
  std::vector<double> a(16 * 32, 0.0), c(16 * 128, 1.0);
  for (int i = 0; i < 16; ++i) a[i * 32 + i] = 1.0;
  std::mt19937_64 rng(1);
  const auto b = random_vec<double>(32 * 128, rng);
  run_tile<double>(k, a, b, c);
  for (int i = 0; i < 16; ++i)
    for (int j = 0; j < 128; ++j) ASSERT_EQ(c[i * 128 + j], 1.0 + b[i * 128 + j]);
}

TEST(RunTile, ZeroALeavesCUnchanged) {
  const auto reg = register_builtin_kernels();
  const auto& k = *reg.find(OpKind::kMatMul, kShapeB);
  std::mt19937_64 rng(2);
  std::vector<float> a(32 * 64, 0.0f);
  const auto b = random_vec<float>(64 * 32, rng);
  auto c = random_vec<float>(32 * 32, rng);
  const auto before = c;
  run_tile<float>(k, a, b, c);
  EXPECT_EQ(c, before);
}

TEST(RunTile, ReduceAndVecAdd) {
  const auto reg = register_builtin_kernels();
  const auto* red = reg.for_op(OpKind::kReduceSum).front();
  std::vector<double> a(static_cast<std::size_t>(red->desc.shape[0]), 0.5), c{1.0};
  run_tile<double>(*red, a, {}, c);
  EXPECT_EQ(c[0], 1.0 + 0.5 * red->desc.shape[0]);
  const auto* add = reg.for_op(OpKind::kVecAdd).front();
  std::vector<float> x(256, 1.0f), y(256, 2.0f), z(256, 0.0f);
  run_tile<float>(*add, x, y, z);
  EXPECT_EQ(z[17], 3.0f);
}

TEST(RunTile, ShapeMismatch) {
  const auto reg = register_builtin_kernels();
  const auto& k = *reg.find(OpKind::kMatMul, kShapeA);
  std::vector<float> a(10), b(32 * 128), c(16 * 128);
  EXPECT_THROW(run_tile<float>(k, a, b, c), ShapeError);
}

TEST(Profile, EmptyRegistry) {
  const ProfileTable t = profile(KernelRegistry{}, {.reps = 1});
  EXPECT_TRUE(t.costs.empty());
}

TEST(Profile, CoversRegistryWithPositiveCosts) {
  const auto reg = register_builtin_kernels();
  const ProfileTable t = profile(reg, {.reps = 1, .warmup = 0});
  EXPECT_TRUE(t.covers(reg));
  for (const auto& [key, cost] : t.costs) EXPECT_GT(cost, 0.0);
  EXPECT_EQ(t.reps, 1);
  EXPECT_THROW(profile(reg, {.reps = 0}), std::invalid_argument);
}

TEST(Profile, RepeatRunsAgreeWithinTwentyPercent) {
  const auto reg = register_builtin_kernels();
  const auto& k = *reg.find(OpKind::kMatMul, kShapeA);
  const ProfileOptions opts{.reps = 9, .warmup = 2};
  const double first = profile_kernel(k, opts);
  const double second = profile_kernel(k, opts);
  EXPECT_LT(std::abs(first - second) / std::min(first, second), 0.20);
}

TEST(Profile, DoublingInnerRepsIsStable) {
  const auto reg = register_builtin_kernels();
  const auto& k = *reg.find(OpKind::kMatMul, kShapeB);
  const double base = profile_kernel(k, {.reps = 9, .warmup = 2, .reps_inner = 200});
  const double doubled = profile_kernel(k, {.reps = 9, .warmup = 2, .reps_inner = 400});
  EXPECT_LT(std::abs(base - doubled) / base, 0.25);
}

TEST(Profile, FlopProportionalityBand) {
  const auto reg = register_builtin_kernels();
  const ProfileOptions opts{.reps = 7, .warmup = 1};
  const double big = profile_kernel(*reg.find(OpKind::kMatMul, kShapeB), opts);
  const double wide = profile_kernel(*reg.find(OpKind::kMatMul, kShapeA), opts);
  EXPECT_LT(big, wide * (32.0 * 64 * 32) / (16.0 * 32 * 128) * 4);
}

ProfileTable sample_table() {
  ProfileTable t;
  t.fingerprint = machine_fingerprint();
  t.reps = 3;
  t.costs[{OpKind::kMatMul, {16, 32, 128}, "mm_blocked_16x32x128"}] = round_cost(1.234567891234e-5);
  t.costs[{OpKind::kMatMul, {32, 64, 32}, "mm_blocked_32x64x32"}] = 9.87654321e-6;
  t.costs[{OpKind::kReduceSum, {32}, "reduce_seq_32"}] = 3.5e-9;
  return t;
}

TEST(ProfileFile, RoundTrip) {
  const ProfileTable t = sample_table();
  std::ostringstream out;
  write_profile(out, t);
  std::istringstream in(out.str());
  const ProfileTable back = read_profile(in);
  EXPECT_EQ(back, t);
  EXPECT_FALSE(back.foreign_fingerprint);
  std::ostringstream again;
  write_profile(again, back);
  EXPECT_EQ(again.str(), out.str());
  EXPECT_NE(out.str().find("matmul 16 32 128 mm_blocked_16x32x128 1.23456789e-05"),
            std::string::npos);
}

TEST(ProfileFile, TruncatedReportsLine) {
  std::ostringstream out;
  write_profile(out, sample_table());
  const std::string text = out.str();
  const std::string cut = text.substr(0, text.rfind("reduce_seq_32"));
  std::istringstream in(cut);
  try {
    read_profile(in);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.location(), 6u);
  }
  std::istringstream header_only("pit-profile v1\n");
  EXPECT_THROW(read_profile(header_only), ParseError);
}

TEST(ProfileFile, ForeignFingerprintIsAWarning) {
  ProfileTable t = sample_table();
  t.fingerprint = "some other machine";
  std::ostringstream out;
  write_profile(out, t);
  std::istringstream in(out.str());
  const ProfileTable back = read_profile(in);
  EXPECT_TRUE(back.foreign_fingerprint);
  EXPECT_EQ(back.costs, t.costs);
}

}  // namespace
}  // namespace pit
