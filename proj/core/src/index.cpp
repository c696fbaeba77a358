#include "pit/index.hpp"

#include <algorithm>
#include <atomic>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace pit {

MicroTileIndex::MicroTileIndex(Dims2 operand_shape, Dims2 micro_tile, PitAxis pit_axis)
    : shape_(operand_shape), micro_tile_(micro_tile), pit_axis_(std::move(pit_axis)) {
  if (micro_tile.rows <= 0 || micro_tile.cols <= 0) {
    throw std::invalid_argument("micro-tile edges must be positive");
  }
  if (pit_axis_.dim != 0 && pit_axis_.dim != 1) {
    throw std::invalid_argument("PIT-axis dimension must be 0 or 1 for a rank-2 operand");
  }
  grid_ = {ceil_div(shape_.rows, micro_tile.rows), ceil_div(shape_.cols, micro_tile.cols)};
  const std::int64_t groups = pit_axis_.dim == 0 ? grid_.cols : grid_.rows;
  capacity_ = pit_axis_.dim == 0 ? grid_.rows : grid_.cols;
  counts_.assign(static_cast<std::size_t>(groups), 0);
  coords_.assign(static_cast<std::size_t>(groups * capacity_), 0);
}

std::int64_t MicroTileIndex::total() const {
  return static_cast<std::int64_t>(std::accumulate(counts_.begin(), counts_.end(), std::size_t{0}));
}

MicroTileIndex::Region MicroTileIndex::region(std::int64_t group, std::uint32_t coord) const {
  const std::int64_t row_cell = pit_axis_.dim == 0 ? coord : group;
  const std::int64_t col_cell = pit_axis_.dim == 0 ? group : coord;
  return {row_cell * micro_tile_.rows, std::min(shape_.rows, (row_cell + 1) * micro_tile_.rows),
          col_cell * micro_tile_.cols, std::min(shape_.cols, (col_cell + 1) * micro_tile_.cols)};
}

class IndexBuilder {
 public:
  template <typename IsNonZero>
  static MicroTileIndex build(Dims2 shape, Dims2 micro_tile, const PitAxis& pit_axis, int workers,
                              IsNonZero&& nonzero) {
    if (workers < 1) throw std::invalid_argument("worker count must be at least 1");
    MicroTileIndex idx(shape, micro_tile, pit_axis);
    const std::int64_t groups = idx.group_count();
    const std::int64_t extent = idx.capacity_;
    std::vector<std::atomic<std::uint32_t>> counters(static_cast<std::size_t>(groups));

    auto scan = [&](std::int64_t begin, std::int64_t end) {
      for (std::int64_t c = begin; c < end; ++c) {
        for (std::int64_t g = 0; g < groups; ++g) {
          if (!nonzero(idx.region(g, static_cast<std::uint32_t>(c)))) continue;
          const std::uint32_t slot =
              counters[static_cast<std::size_t>(g)].fetch_add(1, std::memory_order_relaxed);
          idx.coords_[static_cast<std::size_t>(g * extent + slot)] = static_cast<std::uint32_t>(c);
        }
      }
    };

    const std::int64_t n = std::min<std::int64_t>(workers, std::max<std::int64_t>(extent, 1));
    if (n <= 1) {
      scan(0, extent);
    } else {
      std::vector<std::jthread> pool;
      pool.reserve(static_cast<std::size_t>(n));
      for (std::int64_t w = 0; w < n; ++w) {
        pool.emplace_back(scan, extent * w / n, extent * (w + 1) / n);
      }
    }
    for (std::int64_t g = 0; g < groups; ++g) {
      idx.counts_[static_cast<std::size_t>(g)] = counters[static_cast<std::size_t>(g)].load();
    }
    return idx;
  }
};

MicroTileIndex build_index(const SparsityAnnotation& ann, Dims2 micro_tile, const PitAxis& pit_axis,
                           int workers) {
  const Dims2 g = ann.granularity();
  return IndexBuilder::build(ann.shape(), micro_tile, pit_axis, workers,
                             [&](const MicroTileIndex::Region& r) {
                               return ann.any_in(r.row0 / g.rows, ceil_div(r.row1, g.rows),
                                                 r.col0 / g.cols, ceil_div(r.col1, g.cols));
                             });
}

template <typename T>
MicroTileIndex build_index_from_tensor(const DenseTensor<T>& values, Dims2 micro_tile,
                                       const PitAxis& pit_axis, int workers) {
  return IndexBuilder::build(values.dims2(), micro_tile, pit_axis, workers,
                             [&](const MicroTileIndex::Region& r) {
                               for (std::int64_t i = r.row0; i < r.row1; ++i) {
                                 for (std::int64_t j = r.col0; j < r.col1; ++j) {
                                   if (values.at(i, j) != T{0}) return true;
                                 }
                               }
                               return false;
                             });
}

template MicroTileIndex build_index_from_tensor(const DenseTensor<float>&, Dims2, const PitAxis&,
                                                int);
template MicroTileIndex build_index_from_tensor(const DenseTensor<double>&, Dims2, const PitAxis&,
                                                int);

MicroTileIndex canonicalize(MicroTileIndex idx) {
  for (std::int64_t g = 0; g < idx.group_count(); ++g) {
    auto grp = idx.mutable_group(g);
    std::sort(grp.begin(), grp.end());
  }
  return idx;
}

std::string dump_index(const MicroTileIndex& idx) {
  const MicroTileIndex canon = canonicalize(idx);
  std::ostringstream out;
  out << "microtile " << canon.micro_tile().rows << ' ' << canon.micro_tile().cols << '\n';
  out << "pit_axis " << canon.pit_axis().symbol << '\n';
  for (std::int64_t g = 0; g < canon.group_count(); ++g) {
    const auto grp = canon.group(g);
    out << "group " << g << ' ' << grp.size() << ':';
    for (auto c : grp) out << ' ' << c;
    out << '\n';
  }
  return out.str();
}

}  // namespace pit
