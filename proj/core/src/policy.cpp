#include "pit/policy.hpp"

#include <algorithm>
#include <cstdio>
#include <stdexcept>

#include "pit/error.hpp"

namespace pit {

std::string SparseKernelPlan::dump() const {
  char cost[64];
  std::snprintf(cost, sizeof cost, "%.9g", estimated_cost);
  return "plan op=" + to_string(problem.op) +
         " pit_axis=" + (pit_axis ? pit_axis->symbol : std::string("dense")) +
         " microtile=" + to_string(micro_tile) + " tile=" + tile.shape_string() +
         " impl=" + tile.impl_id + " cost=" + cost;
}

namespace {

// Projection of a tile onto the sparse operand.
Dims2 sparse_projection(const TileKernelDescriptor& tile) {
  switch (tile.op) {
    case OpKind::kMatMul: return {tile.shape.at(0), tile.shape.at(1)};
    case OpKind::kReduceSum: return {1, tile.shape.at(0)};
    case OpKind::kVecAdd: return {1, tile.shape.at(0)};
  }
  return {};
}

}  // namespace

MicroTileChoice get_micro_tile(const TileKernelDescriptor& tile, const PitAxis& pit_axis,
                               Layout sparse_layout) {
  if (pit_axis.dim != 0 && pit_axis.dim != 1) {
    throw std::invalid_argument("PIT-axis '" + pit_axis.symbol +
                                "' is not a dimension of the sparse operand");
  }
  if (tile.op == OpKind::kReduceSum && pit_axis.dim != 1) {
    throw std::invalid_argument("reduce_sum tiles permute only the reduced axis");
  }
  MicroTileChoice out;
  out.micro_tile = sparse_projection(tile);
  if (pit_axis.dim == 0) {
    out.micro_tile.rows = 1;
  } else {
    out.micro_tile.cols = 1;
  }
  if (out.micro_tile.area() == 1) {
    // A single element has no contiguous direction to preserve.
    out.required_layout = sparse_layout;
  } else {
    // Row-major storage is contiguous along dim 1, so a dim-1 permutation
    // needs column-major storage to keep each micro-tile contiguous.
    out.required_layout = pit_axis.dim == 0 ? Layout::kRowMajor : Layout::kColMajor;
  }
  out.layout_change = out.required_layout != sparse_layout;
  return out;
}

std::vector<std::int64_t> cover_counts_per_group(const SparsityAnnotation& ann, Dims2 micro_tile,
                                                 int pit_dim) {
  if (micro_tile.rows <= 0 || micro_tile.cols <= 0) {
    throw std::invalid_argument("micro-tile edges must be positive");
  }
  if (pit_dim != 0 && pit_dim != 1) throw ShapeError("PIT dimension must be 0 or 1");
  const Dims2 shape = ann.shape();
  const Dims2 g = ann.granularity();
  const Dims2 grid{ceil_div(shape.rows, micro_tile.rows), ceil_div(shape.cols, micro_tile.cols)};
  std::vector<std::int64_t> counts(static_cast<std::size_t>(pit_dim == 0 ? grid.cols : grid.rows),
                                   0);
  for (std::int64_t r = 0; r < grid.rows; ++r) {
    const std::int64_t r0 = r * micro_tile.rows;
    const std::int64_t r1 = std::min(shape.rows, r0 + micro_tile.rows);
    for (std::int64_t c = 0; c < grid.cols; ++c) {
      const std::int64_t c0 = c * micro_tile.cols;
      const std::int64_t c1 = std::min(shape.cols, c0 + micro_tile.cols);
      if (ann.any_in(r0 / g.rows, ceil_div(r1, g.rows), c0 / g.cols, ceil_div(c1, g.cols))) {
        ++counts[static_cast<std::size_t>(pit_dim == 0 ? c : r)];
      }
    }
  }
  return counts;
}

std::int64_t cover_count(const SparsityAnnotation& ann, Dims2 micro_tile, int pit_dim) {
  std::int64_t total = 0;
  for (auto c : cover_counts_per_group(ann, micro_tile, pit_dim)) total += c;
  return total;
}

std::int64_t plan_launches(const SparseKernelPlan& plan, const SparsityAnnotation& ann) {
  const Dims2 operand = plan.problem.sparse_operand();
  if (ann.shape() != operand) {
    throw ShapeError("annotation shape " + to_string(ann.shape()) +
                     " does not match the sparse operand " + to_string(operand));
  }
  const auto& t = plan.tile.shape;
  const auto& e = plan.problem.extents;
  if (plan.problem.op == OpKind::kMatMul) {
    const std::int64_t n_grid = ceil_div(e.at(2), t.at(2));
    if (plan.is_dense()) return ceil_div(e[0], t[0]) * ceil_div(e[1], t[1]) * n_grid;
    // A group of the dim-0 index fills M slots per launch; a dim-1 group fills K.
    const std::int64_t per_launch = plan.pit_axis->dim == 0 ? t[0] : t[1];
    std::int64_t launches = 0;
    for (auto c : cover_counts_per_group(ann, plan.micro_tile, plan.pit_axis->dim)) {
      launches += ceil_div(c, per_launch);
    }
    return launches * n_grid;
  }
  if (plan.problem.op == OpKind::kReduceSum) {
    if (plan.is_dense()) return e.at(0) * ceil_div(e.at(1), t.at(0));
    std::int64_t launches = 0;
    for (auto c : cover_counts_per_group(ann, plan.micro_tile, plan.pit_axis->dim)) {
      launches += ceil_div(c, t.at(0));
    }
    return launches;
  }
  throw std::invalid_argument("no launch model for " + to_string(plan.problem.op));
}

double estimate_plan_cost(const SparseKernelPlan& plan, const SparsityAnnotation& ann,
                          const ProfileTable& profile) {
  return static_cast<double>(plan_launches(plan, ann)) * profile.cost(plan.tile);
}

SparseKernelPlan make_plan(const ProblemShape& problem, const TileKernelDescriptor& tile,
                           const std::optional<PitAxis>& pit_axis) {
  if (tile.op != problem.op) {
    throw std::invalid_argument("tile " + tile.impl_id + " does not implement " +
                                to_string(problem.op));
  }
  SparseKernelPlan plan;
  plan.problem = problem;
  plan.tile = tile;
  plan.pit_axis = pit_axis;
  if (pit_axis) {
    const MicroTileChoice choice = get_micro_tile(tile, *pit_axis, Layout::kRowMajor);
    plan.micro_tile = choice.micro_tile;
    plan.sparse_layout = choice.required_layout;
  } else {
    plan.micro_tile = sparse_projection(tile);
    plan.sparse_layout = Layout::kRowMajor;
  }
  return plan;
}

OperatorBinding bind_operator(const TensorExpr& expr, const ExtentMap& extents) {
  validate_extents(expr, extents);
  OperatorBinding b;
  if (auto r = match_reduce_sum(expr)) {
    b.op = OpKind::kReduceSum;
    b.problem = {OpKind::kReduceSum, {extents.at(r->p), extents.at(r->l)}};
    b.row_symbol = r->p;
    b.col_symbol = r->l;
    b.independent_slice_axes = {r->p};
    return b;
  }
  const SimplifiedExpr s = simplify(expr);
  if (auto r = match_matmul(s.expr)) {
    b.op = OpKind::kMatMul;
    b.problem = {OpKind::kMatMul, {extents.at(r->m), extents.at(r->k), extents.at(r->n)}};
    b.row_symbol = r->m;
    b.col_symbol = r->k;
    b.independent_slice_axes = s.independent_slice_axes;
    return b;
  }
  throw std::invalid_argument("no sparse execution model for '" + expr.to_string() +
                              "' (supported: matmul, batch matmul, row reduce_sum)");
}

namespace {

// PIT-axes that are dimensions of the sparse operand.
std::vector<PitAxis> sparse_operand_axes(const OperatorBinding& op) {
  if (op.op == OpKind::kReduceSum) return {{op.col_symbol, 1}};
  return {{op.row_symbol, 0}, {op.col_symbol, 1}};
}

}  // namespace

bool plan_precedes(const SelectionCandidate& a, const SelectionCandidate& b) {
  if (a.cost != b.cost) return a.cost < b.cost;
  if (a.plan.is_dense() != b.plan.is_dense()) return a.plan.is_dense();
  if (a.plan.tile.flops() != b.plan.tile.flops()) return a.plan.tile.flops() > b.plan.tile.flops();
  if (a.plan.tile.impl_id != b.plan.tile.impl_id) return a.plan.tile.impl_id < b.plan.tile.impl_id;
  const std::string sa = a.plan.pit_axis ? a.plan.pit_axis->symbol : "";
  const std::string sb = b.plan.pit_axis ? b.plan.pit_axis->symbol : "";
  return sa < sb;
}

SelectionResult kernel_selection(const OperatorBinding& op,
                                 std::span<const SparsityAnnotation> samples,
                                 const KernelRegistry& registry, const ProfileTable& profile,
                                 const SelectionOptions& options) {
  const auto tiles = registry.for_op(op.op);
  if (tiles.empty()) {
    throw std::invalid_argument("kernel registry has no " + to_string(op.op) + " tiles");
  }
  SelectionResult result;
  auto evaluate = [&](const TileKernelDescriptor& tile, const std::optional<PitAxis>& axis) {
    SelectionCandidate cand;
    cand.plan = make_plan(op.problem, tile, axis);
    for (const auto& sample : samples) {
      const std::int64_t launches = plan_launches(cand.plan, sample);
      cand.launches.push_back(launches);
      cand.num_tiles.push_back(axis ? cover_count(sample, cand.plan.micro_tile, axis->dim)
                                    : launches);
      cand.cost += estimate_plan_cost(cand.plan, sample, profile);
    }
    cand.plan.estimated_cost =
        samples.empty() ? 0.0 : cand.cost / static_cast<double>(samples.size());
    result.candidates.push_back(std::move(cand));
  };

  for (const TileKernel* t : tiles) {
    if (options.only_impl && t->desc.impl_id != *options.only_impl) continue;
    if (options.allow_dense) evaluate(t->desc, std::nullopt);
    if (!options.allow_sparse) continue;
    for (const auto& axis : sparse_operand_axes(op)) {
      if (options.only_axis && axis.symbol != *options.only_axis) continue;
      evaluate(t->desc, axis);
    }
  }
  if (result.candidates.empty()) {
    throw std::invalid_argument("no candidate plan: no applicable PIT-axis or tile and dense "
                                "fallback disabled");
  }
  result.best =
      std::min_element(result.candidates.begin(), result.candidates.end(), plan_precedes)->plan;
  return result;
}

SelectionResult kernel_selection(const TensorExpr& expr, const ExtentMap& extents,
                                 std::span<const SparsityAnnotation> samples,
                                 const KernelRegistry& registry, const ProfileTable& profile,
                                 const SelectionOptions& options) {
  return kernel_selection(bind_operator(expr, extents), samples, registry, profile, options);
}

}  // namespace pit
