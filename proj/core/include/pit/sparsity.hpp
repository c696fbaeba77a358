#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "pit/tensor.hpp"

namespace pit {

// Dynamic sparsity of a rank-2 tensor: a block granularity plus one bit per
// block of the block grid, set iff the block holds at least one non-zero.
// Tensor extents that the granularity does not divide are padded with
// virtual zeros, so the grid is ceil(shape / granularity) in each dimension.
class SparsityAnnotation {
 public:
  SparsityAnnotation() = default;
  // All blocks zero.
  SparsityAnnotation(Dims2 shape, Dims2 granularity);

  Dims2 shape() const { return shape_; }
  Dims2 granularity() const { return granularity_; }
  Dims2 grid() const { return grid_; }

  bool test(std::int64_t block_row, std::int64_t block_col) const {
    const auto bit = static_cast<std::uint64_t>(block_row * grid_.cols + block_col);
    return (bits_[bit >> 6] >> (bit & 63)) & 1u;
  }
  void set(std::int64_t block_row, std::int64_t block_col, bool value = true);

  // True if any block in the half-open block rectangle is non-zero.
  bool any_in(std::int64_t row_begin, std::int64_t row_end, std::int64_t col_begin,
              std::int64_t col_end) const;

  std::int64_t block_count() const { return grid_.area(); }
  std::int64_t nonzero_blocks() const;
  double sparsity_ratio() const;

  // Element-level mask, 1 inside non-zero blocks and 0 elsewhere.
  DenseTensor<float> materialize() const;

  // Re-annotate at granularity (row_factor * g0, col_factor * g1).
  SparsityAnnotation coarsen(std::int64_t row_factor, std::int64_t col_factor) const;

  bool operator==(const SparsityAnnotation&) const = default;

 private:
  Dims2 shape_;
  Dims2 granularity_{1, 1};
  Dims2 grid_;
  std::vector<std::uint64_t> bits_;
};

// Bit is 1 iff any element of the block is non-zero. `granularity` must have
// the same rank as the mask (two) and positive entries.
template <typename T>
SparsityAnnotation from_mask(const DenseTensor<T>& mask, std::span<const std::int64_t> granularity);

template <typename T>
SparsityAnnotation from_mask(const DenseTensor<T>& mask, Dims2 granularity) {
  const std::int64_t g[2] = {granularity.rows, granularity.cols};
  return from_mask(mask, std::span<const std::int64_t>(g, 2));
}

// Padding sparsity of a [B, M] batch of sequences: row b is non-zero for its
// first lengths[b] columns. Granularity (1, 1).
SparsityAnnotation from_ragged_lengths(std::span<const std::int64_t> lengths, Dims2 padded_shape);

// Each block independently zero with probability `zero_ratio`.
SparsityAnnotation random_annotation(Dims2 shape, Dims2 granularity, double zero_ratio,
                                     std::uint64_t seed);

// Text format: `shape d0 d1`, `granularity g0 g1`, then one line of 0/1
// characters per block row.
void write_annotation(std::ostream& out, const SparsityAnnotation& ann);
SparsityAnnotation read_annotation(std::istream& in);
void save_annotation(const SparsityAnnotation& ann, const std::string& path);
SparsityAnnotation load_annotation(const std::string& path);

}  // namespace pit
