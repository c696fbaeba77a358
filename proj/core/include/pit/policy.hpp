#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pit/expr.hpp"
#include "pit/index.hpp"
#include "pit/sparsity.hpp"
#include "pit/tiles.hpp"

namespace pit {

// Extents of the operator a plan runs on. Matmul: {m, k, n}; reduce_sum: {p, l}.
struct ProblemShape {
  OpKind op = OpKind::kMatMul;
  std::vector<std::int64_t> extents;

  // Shape of the sparse operand (A[m,k] or A[p,l]).
  Dims2 sparse_operand() const { return {extents.at(0), extents.at(1)}; }
  bool operator==(const ProblemShape&) const = default;
};

struct SparseKernelPlan {
  ProblemShape problem;
  // Empty means the dense plan.
  std::optional<PitAxis> pit_axis;
  Dims2 micro_tile;
  TileKernelDescriptor tile;
  // Mean over the selection samples of the estimated cost, in seconds.
  double estimated_cost = 0.0;
  Layout sparse_layout = Layout::kRowMajor;

  bool is_dense() const { return !pit_axis.has_value(); }
  // `plan op=matmul pit_axis=m microtile=1x32 tile=16x32x128 impl=<id> cost=<sec>`
  std::string dump() const;
  bool operator==(const SparseKernelPlan&) const = default;
};

struct MicroTileChoice {
  Dims2 micro_tile;
  // Layout the sparse operand must have; differs from the given layout when
  // the operand was contiguous along the PIT-axis.
  Layout required_layout = Layout::kRowMajor;
  bool layout_change = false;
};

// Micro-tile = the tile's projection onto the sparse operand with extent 1
// along the PIT-axis. Throws std::invalid_argument if the axis is not a
// dimension of the sparse operand.
MicroTileChoice get_micro_tile(const TileKernelDescriptor& tile, const PitAxis& pit_axis,
                               Layout sparse_layout);

// Grid-anchored micro-tiles overlapping at least one non-zero block.
std::int64_t cover_count(const SparsityAnnotation& ann, Dims2 micro_tile, int pit_dim);
// The same count split by group (position along the non-PIT grid dimension).
std::vector<std::int64_t> cover_counts_per_group(const SparsityAnnotation& ann, Dims2 micro_tile,
                                                 int pit_dim);

// Tile launches the plan needs for one sample.
std::int64_t plan_launches(const SparseKernelPlan& plan, const SparsityAnnotation& ann);
// plan_launches * tile_cost.
double estimate_plan_cost(const SparseKernelPlan& plan, const SparsityAnnotation& ann,
                          const ProfileTable& profile);

struct SelectionCandidate {
  SparseKernelPlan plan;
  // Per sample: micro-tiles needed to cover the non-zeros, and launches.
  std::vector<std::int64_t> num_tiles;
  std::vector<std::int64_t> launches;
  // Sum over samples of estimate_plan_cost, in sample order.
  double cost = 0.0;
};

struct SelectionOptions {
  bool allow_dense = true;
  bool allow_sparse = true;
  // Restrict sparse candidates to this symbol when set.
  std::optional<std::string> only_axis;
  // Restrict candidates to this tile implementation when set.
  std::optional<std::string> only_impl;
};

struct SelectionResult {
  SparseKernelPlan best;
  std::vector<SelectionCandidate> candidates;
};

// Operator with its axis roles, resolved from a tensor expression.
struct OperatorBinding {
  OpKind op = OpKind::kMatMul;
  ProblemShape problem;
  // Symbols of the sparse operand's two dimensions.
  std::string row_symbol;
  std::string col_symbol;
  std::vector<std::string> independent_slice_axes;
};

// Resolves matmul-like (after removing prevalent axes) and row-reduction
// expressions. Throws std::invalid_argument for other operators.
OperatorBinding bind_operator(const TensorExpr& expr, const ExtentMap& extents);

// Enumerates every (tile, PIT-axis of the sparse operand) pair plus the dense
// plan of every tile and returns the cheapest. Ties go to lower cost, then
// dense, then larger tile FLOPs, then lexicographic impl_id, then axis symbol.
SelectionResult kernel_selection(const OperatorBinding& op,
                                 std::span<const SparsityAnnotation> samples,
                                 const KernelRegistry& registry, const ProfileTable& profile,
                                 const SelectionOptions& options = {});

SelectionResult kernel_selection(const TensorExpr& expr, const ExtentMap& extents,
                                 std::span<const SparsityAnnotation> samples,
                                 const KernelRegistry& registry, const ProfileTable& profile,
                                 const SelectionOptions& options = {});

// Strict-weak "better than" used by kernel_selection.
bool plan_precedes(const SelectionCandidate& a, const SelectionCandidate& b);

// Builds a plan directly for a given tile and axis (no cost model).
SparseKernelPlan make_plan(const ProblemShape& problem, const TileKernelDescriptor& tile,
                           const std::optional<PitAxis>& pit_axis);

}  // namespace pit
