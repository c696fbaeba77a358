#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "pit/sparsity.hpp"
#include "pit/tensor.hpp"

namespace pit {

// The axis a gather order runs along, named by its expression symbol and
// located by its dimension in the rank-2 sparse operand.
struct PitAxis {
  std::string symbol;
  int dim = 0;

  bool operator==(const PitAxis&) const = default;
};

// Non-zero micro-tiles of a rank-2 operand. Micro-tiles sit on the fixed grid
// whose cells are `micro_tile` sized. Group g collects the PIT-axis grid
// coordinates of the non-zero micro-tiles at position g of the other grid
// dimension. Coordinate order inside a group is unspecified.
class MicroTileIndex {
 public:
  MicroTileIndex() = default;
  MicroTileIndex(Dims2 operand_shape, Dims2 micro_tile, PitAxis pit_axis);

  Dims2 operand_shape() const { return shape_; }
  Dims2 micro_tile() const { return micro_tile_; }
  const PitAxis& pit_axis() const { return pit_axis_; }
  // Micro-tile grid extents, ceil(shape / micro_tile).
  Dims2 grid() const { return grid_; }

  std::int64_t group_count() const { return static_cast<std::int64_t>(counts_.size()); }
  // Grid extent along the PIT-axis: the most coordinates any group can hold.
  std::int64_t group_capacity() const { return capacity_; }
  std::int64_t total() const;

  std::span<const std::uint32_t> group(std::int64_t g) const {
    const auto gi = static_cast<std::size_t>(g);
    return {coords_.data() + gi * static_cast<std::size_t>(capacity_), counts_[gi]};
  }
  std::span<std::uint32_t> mutable_group(std::int64_t g) {
    const auto gi = static_cast<std::size_t>(g);
    return {coords_.data() + gi * static_cast<std::size_t>(capacity_), counts_[gi]};
  }

  // Element rectangle [row0, row1) x [col0, col1) of a micro-tile, clipped to
  // the operand shape.
  struct Region {
    std::int64_t row0, row1, col0, col1;
  };
  Region region(std::int64_t group, std::uint32_t coord) const;

  bool operator==(const MicroTileIndex&) const = default;

 private:
  friend class IndexBuilder;

  Dims2 shape_;
  Dims2 micro_tile_{1, 1};
  PitAxis pit_axis_;
  Dims2 grid_;
  std::int64_t capacity_ = 0;
  std::vector<std::size_t> counts_;
  std::vector<std::uint32_t> coords_;
};

// Online detection from an annotation. With workers > 1 the PIT-axis range is
// split across threads that reserve group slots through a shared atomic
// counter per group, so the resulting per-group order depends on scheduling.
MicroTileIndex build_index(const SparsityAnnotation& ann, Dims2 micro_tile, const PitAxis& pit_axis,
                           int workers = 1);

// Same contract, detecting non-zeros (value != 0 exactly) directly in a tensor.
template <typename T>
MicroTileIndex build_index_from_tensor(const DenseTensor<T>& values, Dims2 micro_tile,
                                       const PitAxis& pit_axis, int workers = 1);

// Sorts every group ascending.
MicroTileIndex canonicalize(MicroTileIndex idx);

// Text dump in canonical order: `microtile g0 g1`, `pit_axis <sym>`, then
// `group <id> <count>: c0 c1 ...` per group.
std::string dump_index(const MicroTileIndex& idx);

}  // namespace pit
