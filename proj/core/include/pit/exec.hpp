#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "pit/index.hpp"
#include "pit/policy.hpp"
#include "pit/sparsity.hpp"
#include "pit/tensor.hpp"
#include "pit/tiles.hpp"

namespace pit {

struct ExecOptions {
  int workers = 1;
};

template <typename T>
struct ExecResult {
  DenseTensor<T> output;
  std::int64_t launches = 0;
};

enum class WriteMode { kAssign, kAccumulate };

// SRead: copies the micro-tiles named by group coordinates [first, first +
// slots) of `idx`, in stored order, into consecutive slots of `tile`. For a
// dim-0 index the tile is [slots * mt.rows, mt.cols]; for dim 1 it is
// [mt.rows, slots * mt.cols]; both row-major. Slots past the group end and
// elements past the operand edge are zero. `src` is only read.
template <typename T>
void sread(const DenseTensor<T>& src, const MicroTileIndex& idx, std::int64_t group,
           std::span<T> tile, std::int64_t first, std::int64_t slots);

// SWrite: the inverse placement. Slots past the group end are not written.
template <typename T>
void swrite(std::span<const T> tile, DenseTensor<T>& dst, const MicroTileIndex& idx,
            std::int64_t group, std::int64_t first, std::int64_t slots,
            WriteMode mode = WriteMode::kAssign);

// C = A * B through the plan: gather surviving micro-tiles of A, run the dense
// tile kernel, scatter the result. A must be stored in plan.sparse_layout for
// sparse plans; B is row-major. The annotation describes A.
template <typename T>
ExecResult<T> run_sparse_matmul(const SparseKernelPlan& plan, const DenseTensor<T>& a,
                                const DenseTensor<T>& b, const SparsityAnnotation& ann,
                                const KernelRegistry& registry, const ExecOptions& options = {});

// Same, with a caller-supplied index (any per-group order).
template <typename T>
ExecResult<T> run_sparse_matmul(const SparseKernelPlan& plan, const DenseTensor<T>& a,
                                const DenseTensor<T>& b, const MicroTileIndex& idx,
                                const KernelRegistry& registry, const ExecOptions& options = {});

// Naive triple loop accumulating in double.
template <typename T>
DenseTensor<double> run_dense_reference(const DenseTensor<T>& a, const DenseTensor<T>& b);

// C[p] = sum over surviving l of A[p, l]. Row p of the annotation gives the
// survivors of row p; each row is gathered with its own order.
template <typename T>
ExecResult<T> run_sparse_reduce_sum(const SparseKernelPlan& plan, const DenseTensor<T>& a,
                                    const SparsityAnnotation& ann, const KernelRegistry& registry,
                                    const ExecOptions& options = {});

template <typename T>
ExecResult<T> run_sparse_reduce_sum(const SparseKernelPlan& plan, const DenseTensor<T>& a,
                                    const MicroTileIndex& idx, const KernelRegistry& registry,
                                    const ExecOptions& options = {});

template <typename T>
DenseTensor<double> reduce_sum_reference(const DenseTensor<T>& a);

// max |got - ref| / max(max |ref|, abs_floor): infinity-norm relative error.
template <typename T>
double max_relative_error(const DenseTensor<T>& got, const DenseTensor<double>& ref,
                          double abs_floor = 1e-6);

// A bijection on [0, extent) applied along one axis.
class Permutation {
 public:
  Permutation() = default;
  // Throws std::invalid_argument unless `mapping` is a bijection.
  Permutation(std::string axis, std::vector<std::int64_t> mapping);

  static Permutation identity(std::string axis, std::int64_t extent);
  static Permutation random(std::string axis, std::int64_t extent, std::uint64_t seed);

  const std::string& axis() const { return axis_; }
  std::span<const std::int64_t> mapping() const { return mapping_; }
  std::int64_t extent() const { return static_cast<std::int64_t>(mapping_.size()); }
  std::int64_t operator()(std::int64_t i) const { return mapping_[static_cast<std::size_t>(i)]; }

  bool operator==(const Permutation&) const = default;

 private:
  std::string axis_;
  std::vector<std::int64_t> mapping_;
};

Permutation invert(const Permutation& p);

// out[..., p(i), ...] = in[..., i, ...] along tensor dimension `dim`.
template <typename T>
DenseTensor<T> apply_permutation(const DenseTensor<T>& t, const Permutation& p, int dim);

}  // namespace pit
