#pragma once

#include <compare>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "pit/tensor.hpp"

namespace pit {

enum class OpKind { kMatMul, kReduceSum, kVecAdd };

std::string to_string(OpKind op);
OpKind op_kind_from_string(const std::string& name);

// A dense tile microkernel. Matmul tiles are [M, K, N] and compute
// C[M,N] += A[M,K] * B[K,N]; reduce_sum tiles are [L] and add the sum of L
// values to a single accumulator; vec_add tiles are [P] and compute C += A + B.
// All operand buffers are contiguous and row-major.
struct TileKernelDescriptor {
  OpKind op = OpKind::kMatMul;
  std::vector<std::int64_t> shape;
  std::string impl_id;
  std::vector<Layout> layouts;

  std::int64_t flops() const;
  // Element counts of the (a, b, c) operand buffers; b is 0 when unused.
  std::int64_t a_size() const;
  std::int64_t b_size() const;
  std::int64_t c_size() const;
  std::string shape_string() const;

  auto operator<=>(const TileKernelDescriptor&) const = default;
};

template <typename T>
using TileFn = void (*)(const T* a, const T* b, T* c);

struct TileKernel {
  TileKernelDescriptor desc;
  TileFn<float> f32 = nullptr;
  TileFn<double> f64 = nullptr;
};

class KernelRegistry {
 public:
  // Throws std::invalid_argument on a duplicate impl_id.
  void add(TileKernel kernel);

  const TileKernel* find(OpKind op, std::span<const std::int64_t> shape) const;
  const TileKernel* find_impl(const std::string& impl_id) const;
  std::vector<const TileKernel*> for_op(OpKind op) const;
  const std::vector<TileKernel>& kernels() const { return kernels_; }
  bool empty() const { return kernels_.empty(); }

 private:
  std::vector<TileKernel> kernels_;
};

// Matmul tiles 8x32x128, 16x32x128, 32x64x32, 32x32x32 plus reduce_sum and
// vec_add tiles.
KernelRegistry register_builtin_kernels();

// Runs one tile invocation. Buffers must hold exactly the descriptor's
// operand sizes; throws ShapeError otherwise.
template <typename T>
void run_tile(const TileKernel& kernel, std::span<const T> a, std::span<const T> b, std::span<T> c);

template <typename T>
TileFn<T> tile_fn(const TileKernel& kernel);

struct ProfileKey {
  OpKind op;
  std::vector<std::int64_t> shape;
  std::string impl_id;

  auto operator<=>(const ProfileKey&) const = default;
};

ProfileKey profile_key(const TileKernelDescriptor& desc);

struct ProfileTable {
  // Seconds per tile invocation, amortized over back-to-back runs.
  std::map<ProfileKey, double> costs;
  std::string fingerprint;
  int reps = 0;
  // Set by load_profile when the file was produced on another machine.
  bool foreign_fingerprint = false;

  double cost(const TileKernelDescriptor& desc) const;
  bool covers(const KernelRegistry& registry) const;

  bool operator==(const ProfileTable& o) const {
    return costs == o.costs && fingerprint == o.fingerprint && reps == o.reps;
  }
};

struct ProfileOptions {
  int reps = 5;
  int warmup = 1;
  // Invocations per timed batch; 0 calibrates to roughly `target_batch_seconds`.
  int reps_inner = 0;
  double target_batch_seconds = 2e-3;
};

std::string machine_fingerprint();

// Median amortized per-invocation wall time for every registered kernel (f32).
ProfileTable profile(const KernelRegistry& registry, const ProfileOptions& options = {});

// Measures a single kernel; exposed for stability tests.
double profile_kernel(const TileKernel& kernel, const ProfileOptions& options);

// Text format: `pit-profile v1`, `fingerprint <text>`, `reps <n>`, then one
// entry per line `<op> <dims...> <impl_id> <cost_seconds>` with costs in 9
// significant digits.
void write_profile(std::ostream& out, const ProfileTable& table);
ProfileTable read_profile(std::istream& in);
void save_profile(const ProfileTable& table, const std::string& path);
ProfileTable load_profile(const std::string& path);

// Rounds to the 9 significant digits the profile format stores.
double round_cost(double seconds);

}  // namespace pit
