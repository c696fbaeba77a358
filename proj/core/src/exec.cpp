#include "pit/exec.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>
#include <thread>

#include "pit/error.hpp"

namespace pit {

namespace {

struct Strides {
  std::int64_t row;
  std::int64_t col;
};

template <typename T>
Strides strides_of(const DenseTensor<T>& t) {
  const Dims2 d = t.dims2();
  return t.layout() == Layout::kRowMajor ? Strides{d.cols, 1} : Strides{1, d.rows};
}

struct Rect {
  std::int64_t row0, row1, col0, col1;
  bool full(Dims2 mt) const { return row1 - row0 == mt.rows && col1 - col0 == mt.cols; }
};

Rect micro_tile_rect(Dims2 shape, Dims2 mt, int pit_dim, std::int64_t group, std::uint32_t coord) {
  const std::int64_t row_cell = pit_dim == 0 ? coord : group;
  const std::int64_t col_cell = pit_dim == 0 ? group : coord;
  const Rect r{row_cell * mt.rows, std::min(shape.rows, (row_cell + 1) * mt.rows),
               col_cell * mt.cols, std::min(shape.cols, (col_cell + 1) * mt.cols)};
  if (r.row0 >= shape.rows || r.col0 >= shape.cols) {
    throw std::out_of_range("micro-tile coordinate " + std::to_string(coord) + " in group " +
                            std::to_string(group) + " lies outside the operand");
  }
  return r;
}

// Top-left element of slot s inside a slot tile, and the tile's row pitch.
struct SlotLayout {
  std::int64_t ld;
  std::int64_t row0(std::int64_t s, Dims2 mt, int pit_dim) const {
    return pit_dim == 0 ? s * mt.rows : 0;
  }
  std::int64_t col0(std::int64_t s, Dims2 mt, int pit_dim) const {
    return pit_dim == 0 ? 0 : s * mt.cols;
  }
};

template <typename T>
void zero_slot(std::span<T> tile, SlotLayout lay, Dims2 mt, int pit_dim, std::int64_t s) {
  const std::int64_t br = lay.row0(s, mt, pit_dim);
  const std::int64_t bc = lay.col0(s, mt, pit_dim);
  for (std::int64_t i = 0; i < mt.rows; ++i) {
    T* row = tile.data() + (br + i) * lay.ld + bc;
    std::fill(row, row + mt.cols, T{0});
  }
}

template <typename T>
void gather_slots(const DenseTensor<T>& src, std::span<const std::uint32_t> coords, int pit_dim,
                  Dims2 mt, std::int64_t group, std::span<T> tile, std::int64_t slots) {
  if (static_cast<std::int64_t>(tile.size()) != slots * mt.area()) {
    throw ShapeError("gather tile buffer does not hold " + std::to_string(slots) + " micro-tiles");
  }
  const Dims2 shape = src.dims2();
  const Strides st = strides_of(src);
  const SlotLayout lay{pit_dim == 0 ? mt.cols : slots * mt.cols};
  const std::int64_t filled = std::min<std::int64_t>(slots, static_cast<std::int64_t>(coords.size()));
  const T* base = src.data();
  for (std::int64_t s = 0; s < slots; ++s) {
    if (s >= filled) {
      zero_slot(tile, lay, mt, pit_dim, s);
      continue;
    }
    const Rect r = micro_tile_rect(shape, mt, pit_dim, group, coords[static_cast<std::size_t>(s)]);
    if (!r.full(mt)) zero_slot(tile, lay, mt, pit_dim, s);
    const std::int64_t br = lay.row0(s, mt, pit_dim);
    const std::int64_t bc = lay.col0(s, mt, pit_dim);
    if (st.col == 1) {
      for (std::int64_t i = r.row0; i < r.row1; ++i) {
        const T* from = base + i * st.row + r.col0;
        std::copy(from, from + (r.col1 - r.col0), tile.data() + (br + i - r.row0) * lay.ld + bc);
      }
    } else {
      for (std::int64_t j = r.col0; j < r.col1; ++j) {
        const T* from = base + j * st.col;
        T* to = tile.data() + br * lay.ld + bc + (j - r.col0);
        for (std::int64_t i = r.row0; i < r.row1; ++i) to[(i - r.row0) * lay.ld] = from[i];
      }
    }
  }
}

template <typename T>
void scatter_slots(std::span<const T> tile, DenseTensor<T>& dst,
                   std::span<const std::uint32_t> coords, int pit_dim, Dims2 mt,
                   std::int64_t group, std::int64_t slots, WriteMode mode) {
  if (static_cast<std::int64_t>(tile.size()) != slots * mt.area()) {
    throw ShapeError("scatter tile buffer does not hold " + std::to_string(slots) + " micro-tiles");
  }
  const Dims2 shape = dst.dims2();
  const Strides st = strides_of(dst);
  const SlotLayout lay{pit_dim == 0 ? mt.cols : slots * mt.cols};
  const std::int64_t filled = std::min<std::int64_t>(slots, static_cast<std::int64_t>(coords.size()));
  T* base = dst.data();
  for (std::int64_t s = 0; s < filled; ++s) {
    const Rect r = micro_tile_rect(shape, mt, pit_dim, group, coords[static_cast<std::size_t>(s)]);
    const std::int64_t br = lay.row0(s, mt, pit_dim);
    const std::int64_t bc = lay.col0(s, mt, pit_dim);
    for (std::int64_t i = r.row0; i < r.row1; ++i) {
      const T* from = tile.data() + (br + i - r.row0) * lay.ld + bc;
      for (std::int64_t j = r.col0; j < r.col1; ++j) {
        T& out = base[i * st.row + j * st.col];
        if (mode == WriteMode::kAccumulate) {
          out += from[j - r.col0];
        } else {
          out = from[j - r.col0];
        }
      }
    }
  }
}

std::span<const std::uint32_t> group_slice(const MicroTileIndex& idx, std::int64_t group,
                                           std::int64_t first) {
  if (group < 0 || group >= idx.group_count()) {
    throw std::out_of_range("group " + std::to_string(group) + " not in index");
  }
  auto grp = idx.group(group);
  if (first < 0) throw std::out_of_range("negative slot offset");
  if (first >= static_cast<std::int64_t>(grp.size())) return {};
  return grp.subspan(static_cast<std::size_t>(first));
}

template <typename F>
void parallel_ranges(std::int64_t n, int workers, F&& fn) {
  const std::int64_t w = std::min<std::int64_t>(std::max(workers, 1), std::max<std::int64_t>(n, 1));
  if (w <= 1) {
    fn(std::int64_t{0}, n, 0);
    return;
  }
  std::vector<std::jthread> pool;
  pool.reserve(static_cast<std::size_t>(w));
  for (std::int64_t i = 0; i < w; ++i) {
    pool.emplace_back([&fn, n, w, i] { fn(n * i / w, n * (i + 1) / w, static_cast<int>(i)); });
  }
}

const TileKernel& resolve_kernel(const SparseKernelPlan& plan, const KernelRegistry& registry) {
  const TileKernel* k = registry.find_impl(plan.tile.impl_id);
  if (k == nullptr || k->desc != plan.tile) {
    throw std::invalid_argument("plan tile " + plan.tile.impl_id + " is not in the registry");
  }
  return *k;
}

struct MatMulGeometry {
  std::int64_t m, k, n;
  std::int64_t tm, tk, tn;
  std::int64_t m_grid, k_grid, n_grid;
};

template <typename T>
MatMulGeometry check_matmul(const SparseKernelPlan& plan, const DenseTensor<T>& a,
                            const DenseTensor<T>& b) {
  if (plan.problem.op != OpKind::kMatMul || plan.tile.op != OpKind::kMatMul) {
    throw std::invalid_argument("plan is not a matmul plan");
  }
  a.require_rank(2);
  b.require_rank(2);
  const auto& e = plan.problem.extents;
  if (a.extent(0) != e.at(0) || a.extent(1) != e.at(1) || b.extent(0) != e.at(1) ||
      b.extent(1) != e.at(2)) {
    throw ShapeError("operands do not match plan extents m=" + std::to_string(e[0]) +
                     " k=" + std::to_string(e[1]) + " n=" + std::to_string(e[2]));
  }
  if (b.layout() != Layout::kRowMajor) throw ShapeError("dense operand B must be row-major");
  if (!plan.is_dense() && a.layout() != plan.sparse_layout) {
    throw ShapeError("plan along '" + plan.pit_axis->symbol + "' requires A in " +
                     to_string(plan.sparse_layout) + " layout");
  }
  const auto& t = plan.tile.shape;
  MatMulGeometry g{e[0], e[1], e[2], t[0], t[1], t[2], 0, 0, 0};
  g.m_grid = ceil_div(g.m, g.tm);
  g.k_grid = ceil_div(g.k, g.tk);
  g.n_grid = ceil_div(g.n, g.tn);
  return g;
}

// B as k_grid x n_grid contiguous [tk, tn] tiles, zero padded.
template <typename T>
std::vector<T> pack_b(const DenseTensor<T>& b, const MatMulGeometry& g) {
  const std::int64_t tile = g.tk * g.tn;
  std::vector<T> packed(static_cast<std::size_t>(g.k_grid * g.n_grid * tile), T{0});
  const T* src = b.data();
  for (std::int64_t kb = 0; kb < g.k_grid; ++kb) {
    const std::int64_t k1 = std::min(g.k, (kb + 1) * g.tk);
    for (std::int64_t nb = 0; nb < g.n_grid; ++nb) {
      const std::int64_t n0 = nb * g.tn;
      const std::int64_t n1 = std::min(g.n, n0 + g.tn);
      T* dst = packed.data() + (kb * g.n_grid + nb) * tile;
      for (std::int64_t kk = kb * g.tk; kk < k1; ++kk) {
        std::copy(src + kk * g.n + n0, src + kk * g.n + n1, dst + (kk - kb * g.tk) * g.tn);
      }
    }
  }
  return packed;
}

template <typename T>
void store_c_tile(const T* tile, DenseTensor<T>& c, const MatMulGeometry& g, std::int64_t mb,
                  std::int64_t nb) {
  const std::int64_t m0 = mb * g.tm;
  const std::int64_t m1 = std::min(g.m, m0 + g.tm);
  const std::int64_t n0 = nb * g.tn;
  const std::int64_t n1 = std::min(g.n, n0 + g.tn);
  for (std::int64_t i = m0; i < m1; ++i) {
    std::copy(tile + (i - m0) * g.tn, tile + (i - m0) * g.tn + (n1 - n0), c.data() + i * g.n + n0);
  }
}

template <typename T>
ExecResult<T> dense_matmul(const SparseKernelPlan& plan, const DenseTensor<T>& a,
                           const DenseTensor<T>& b, const TileFn<T> fn, int workers) {
  const MatMulGeometry g = check_matmul(plan, a, b);
  ExecResult<T> res{DenseTensor<T>::matrix({g.m, g.n}), 0};
  const std::vector<T> bp = pack_b(b, g);
  const std::int64_t a_tile = g.tm * g.tk;
  std::vector<T> ap(static_cast<std::size_t>(g.m_grid * g.k_grid * a_tile), T{0});
  const Strides st = strides_of(a);
  for (std::int64_t mb = 0; mb < g.m_grid; ++mb) {
    for (std::int64_t kb = 0; kb < g.k_grid; ++kb) {
      T* dst = ap.data() + (mb * g.k_grid + kb) * a_tile;
      for (std::int64_t i = mb * g.tm; i < std::min(g.m, (mb + 1) * g.tm); ++i) {
        for (std::int64_t j = kb * g.tk; j < std::min(g.k, (kb + 1) * g.tk); ++j) {
          dst[(i - mb * g.tm) * g.tk + (j - kb * g.tk)] = a.data()[i * st.row + j * st.col];
        }
      }
    }
  }
  std::atomic<std::int64_t> launches{0};
  parallel_ranges(g.m_grid, workers, [&](std::int64_t begin, std::int64_t end, int) {
    std::vector<T> cbuf(static_cast<std::size_t>(g.tm * g.tn));
    std::int64_t local = 0;
    for (std::int64_t mb = begin; mb < end; ++mb) {
      for (std::int64_t nb = 0; nb < g.n_grid; ++nb) {
        std::fill(cbuf.begin(), cbuf.end(), T{0});
        for (std::int64_t kb = 0; kb < g.k_grid; ++kb) {
          fn(ap.data() + (mb * g.k_grid + kb) * a_tile,
             bp.data() + (kb * g.n_grid + nb) * g.tk * g.tn, cbuf.data());
          ++local;
        }
        store_c_tile(cbuf.data(), res.output, g, mb, nb);
      }
    }
    launches += local;
  });
  res.launches = launches.load();
  return res;
}

// PIT along m: every K-block group is gathered once into chunks of M surviving
// rows (the sparse counterpart of packing A). Workers then own column blocks
// of C, which stay cache resident while all chunks accumulate into them.
template <typename T>
ExecResult<T> m_axis_matmul(const SparseKernelPlan& plan, const DenseTensor<T>& a,
                            const DenseTensor<T>& b, const MicroTileIndex& idx, const TileFn<T> fn,
                            int workers) {
  const MatMulGeometry g = check_matmul(plan, a, b);
  ExecResult<T> res{DenseTensor<T>::matrix({g.m, g.n}), 0};
  const std::vector<T> bp = pack_b(b, g);
  const std::int64_t a_tile = g.tm * g.tk;
  std::vector<std::int64_t> first_chunk(static_cast<std::size_t>(g.k_grid + 1), 0);
  for (std::int64_t kb = 0; kb < g.k_grid; ++kb) {
    first_chunk[kb + 1] =
        first_chunk[kb] + ceil_div(static_cast<std::int64_t>(idx.group(kb).size()), g.tm);
  }
  std::vector<T> ap(static_cast<std::size_t>(first_chunk.back() * a_tile));
  parallel_ranges(g.k_grid, workers, [&](std::int64_t kb0, std::int64_t kb1, int) {
    for (std::int64_t kb = kb0; kb < kb1; ++kb) {
      for (std::int64_t c = first_chunk[kb]; c < first_chunk[kb + 1]; ++c) {
        sread<T>(a, idx, kb, std::span<T>(ap.data() + c * a_tile, static_cast<std::size_t>(a_tile)),
                 (c - first_chunk[kb]) * g.tm, g.tm);
      }
    }
  });
  std::atomic<std::int64_t> launches{0};
  parallel_ranges(g.n_grid, workers, [&](std::int64_t nb0, std::int64_t nb1, int) {
    // Private [m, tn] panel of C: contiguous rows avoid the cache-set
    // aliasing of walking a column block of C at row pitch n.
    std::vector<T> panel(static_cast<std::size_t>(g.m * g.tn));
    std::vector<T> cbuf(static_cast<std::size_t>(g.tm * g.tn));
    std::int64_t local = 0;
    for (std::int64_t nb = nb0; nb < nb1; ++nb) {
      std::fill(panel.begin(), panel.end(), T{0});
      for (std::int64_t kb = 0; kb < g.k_grid; ++kb) {
        const auto grp = idx.group(kb);
        const T* btile = bp.data() + (kb * g.n_grid + nb) * g.tk * g.tn;
        for (std::int64_t c = first_chunk[kb]; c < first_chunk[kb + 1]; ++c) {
          const std::int64_t s0 = (c - first_chunk[kb]) * g.tm;
          const std::int64_t filled =
              std::min<std::int64_t>(g.tm, static_cast<std::int64_t>(grp.size()) - s0);
          const std::int64_t r0 = grp[s0];
          if (filled == g.tm && r0 + g.tm <= g.m &&
              static_cast<std::int64_t>(grp[s0 + g.tm - 1]) == r0 + g.tm - 1 &&
              std::adjacent_find(grp.begin() + s0, grp.begin() + s0 + g.tm,
                                 [](std::uint32_t x, std::uint32_t y) { return y != x + 1; }) ==
                  grp.begin() + s0 + g.tm) {
            // Consecutive rows: the panel already holds them as a dense tile.
            fn(ap.data() + c * a_tile, btile, panel.data() + r0 * g.tn);
            ++local;
            continue;
          }
          // Rows of the chunk are read into the tile, accumulated, written back.
          for (std::int64_t s = 0; s < filled; ++s) {
            const T* row = panel.data() + static_cast<std::int64_t>(grp[s0 + s]) * g.tn;
            std::copy(row, row + g.tn, cbuf.data() + s * g.tn);
          }
          std::fill(cbuf.begin() + filled * g.tn, cbuf.end(), T{0});
          fn(ap.data() + c * a_tile, btile, cbuf.data());
          ++local;
          for (std::int64_t s = 0; s < filled; ++s) {
            const T* src = cbuf.data() + s * g.tn;
            std::copy(src, src + g.tn, panel.data() + static_cast<std::int64_t>(grp[s0 + s]) * g.tn);
          }
        }
      }
      const std::int64_t n0 = nb * g.tn;
      const std::int64_t width = std::min(g.n, n0 + g.tn) - n0;
      for (std::int64_t i = 0; i < g.m; ++i) {
        std::copy(panel.data() + i * g.tn, panel.data() + i * g.tn + width,
                  res.output.data() + i * g.n + n0);
      }
    }
    launches += local;
  });
  res.launches = launches.load();
  return res;
}

// PIT along k: each M-block group gathers K surviving columns of A and the
// matching rows of B; C tiles of the row block stay resident until the end.
template <typename T>
ExecResult<T> k_axis_matmul(const SparseKernelPlan& plan, const DenseTensor<T>& a,
                            const DenseTensor<T>& b, const MicroTileIndex& idx, const TileFn<T> fn,
                            int workers) {
  const MatMulGeometry g = check_matmul(plan, a, b);
  ExecResult<T> res{DenseTensor<T>::matrix({g.m, g.n}), 0};
  const std::int64_t b_tile = g.tk * g.tn;
  const std::int64_t c_tile = g.tm * g.tn;
  std::atomic<std::int64_t> launches{0};
  parallel_ranges(g.m_grid, workers, [&](std::int64_t mb0, std::int64_t mb1, int) {
    std::vector<T> abuf(static_cast<std::size_t>(g.tm * g.tk));
    std::vector<T> bpanel(static_cast<std::size_t>(g.n_grid * b_tile));
    std::vector<T> cacc(static_cast<std::size_t>(g.n_grid * c_tile));
    std::int64_t local = 0;
    for (std::int64_t mb = mb0; mb < mb1; ++mb) {
      std::fill(cacc.begin(), cacc.end(), T{0});
      const auto grp = idx.group(mb);
      for (std::size_t s = 0; s < grp.size(); s += static_cast<std::size_t>(g.tk)) {
        sread<T>(a, idx, mb, abuf, static_cast<std::int64_t>(s), g.tk);
        const std::size_t filled = std::min<std::size_t>(grp.size() - s, g.tk);
        for (std::int64_t j = 0; j < g.tk; ++j) {
          for (std::int64_t nb = 0; nb < g.n_grid; ++nb) {
            T* dst = bpanel.data() + nb * b_tile + j * g.tn;
            const std::int64_t n0 = nb * g.tn;
            const std::int64_t n1 = std::min(g.n, n0 + g.tn);
            if (static_cast<std::size_t>(j) < filled) {
              const T* src = b.data() + static_cast<std::int64_t>(grp[s + j]) * g.n;
              std::copy(src + n0, src + n1, dst);
              std::fill(dst + (n1 - n0), dst + g.tn, T{0});
            } else {
              std::fill(dst, dst + g.tn, T{0});
            }
          }
        }
        for (std::int64_t nb = 0; nb < g.n_grid; ++nb) {
          fn(abuf.data(), bpanel.data() + nb * b_tile, cacc.data() + nb * c_tile);
          ++local;
        }
      }
      for (std::int64_t nb = 0; nb < g.n_grid; ++nb) {
        store_c_tile(cacc.data() + nb * c_tile, res.output, g, mb, nb);
      }
    }
    launches += local;
  });
  res.launches = launches.load();
  return res;
}

void check_index_matches(const SparseKernelPlan& plan, const MicroTileIndex& idx, Dims2 operand) {
  if (plan.is_dense()) return;
  if (idx.micro_tile() != plan.micro_tile || idx.pit_axis().dim != plan.pit_axis->dim ||
      idx.operand_shape() != operand) {
    throw ShapeError("micro-tile index does not match the plan (micro-tile " +
                     to_string(idx.micro_tile()) + " vs " + to_string(plan.micro_tile) + ")");
  }
}

}  // namespace

template <typename T>
void sread(const DenseTensor<T>& src, const MicroTileIndex& idx, std::int64_t group,
           std::span<T> tile, std::int64_t first, std::int64_t slots) {
  if (src.dims2() != idx.operand_shape()) throw ShapeError("index built for another operand shape");
  gather_slots<T>(src, group_slice(idx, group, first), idx.pit_axis().dim, idx.micro_tile(), group,
                  tile, slots);
}

template <typename T>
void swrite(std::span<const T> tile, DenseTensor<T>& dst, const MicroTileIndex& idx,
            std::int64_t group, std::int64_t first, std::int64_t slots, WriteMode mode) {
  if (dst.dims2() != idx.operand_shape()) throw ShapeError("index built for another operand shape");
  scatter_slots<T>(tile, dst, group_slice(idx, group, first), idx.pit_axis().dim, idx.micro_tile(),
                   group, slots, mode);
}

template <typename T>
ExecResult<T> run_sparse_matmul(const SparseKernelPlan& plan, const DenseTensor<T>& a,
                                const DenseTensor<T>& b, const MicroTileIndex& idx,
                                const KernelRegistry& registry, const ExecOptions& options) {
  const TileFn<T> fn = tile_fn<T>(resolve_kernel(plan, registry));
  if (plan.is_dense()) return dense_matmul(plan, a, b, fn, options.workers);
  check_index_matches(plan, idx, a.dims2());
  if (plan.pit_axis->dim == 0) return m_axis_matmul(plan, a, b, idx, fn, options.workers);
  return k_axis_matmul(plan, a, b, idx, fn, options.workers);
}

template <typename T>
ExecResult<T> run_sparse_matmul(const SparseKernelPlan& plan, const DenseTensor<T>& a,
                                const DenseTensor<T>& b, const SparsityAnnotation& ann,
                                const KernelRegistry& registry, const ExecOptions& options) {
  if (ann.shape() != a.dims2()) {
    throw ShapeError("annotation shape " + to_string(ann.shape()) + " does not match A " +
                     to_string(a.dims2()));
  }
  if (plan.is_dense()) return run_sparse_matmul(plan, a, b, MicroTileIndex{}, registry, options);
  const MicroTileIndex idx = build_index(ann, plan.micro_tile, *plan.pit_axis, options.workers);
  return run_sparse_matmul(plan, a, b, idx, registry, options);
}

template <typename T>
DenseTensor<double> run_dense_reference(const DenseTensor<T>& a, const DenseTensor<T>& b) {
  a.require_rank(2);
  b.require_rank(2);
  if (a.extent(1) != b.extent(0)) {
    throw ShapeError("inner extents differ: " + std::to_string(a.extent(1)) + " vs " +
                     std::to_string(b.extent(0)));
  }
  const std::int64_t m = a.extent(0), k = a.extent(1), n = b.extent(1);
  auto c = DenseTensor<double>::matrix({m, n});
  std::vector<double> row(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < m; ++i) {
    std::fill(row.begin(), row.end(), 0.0);
    for (std::int64_t kk = 0; kk < k; ++kk) {
      const double av = a.at(i, kk);
      if (av == 0.0) continue;
      for (std::int64_t j = 0; j < n; ++j) row[static_cast<std::size_t>(j)] += av * b.at(kk, j);
    }
    for (std::int64_t j = 0; j < n; ++j) c.at(i, j) = row[static_cast<std::size_t>(j)];
  }
  return c;
}

template <typename T>
ExecResult<T> run_sparse_reduce_sum(const SparseKernelPlan& plan, const DenseTensor<T>& a,
                                    const MicroTileIndex& idx, const KernelRegistry& registry,
                                    const ExecOptions& options) {
  if (plan.problem.op != OpKind::kReduceSum) throw std::invalid_argument("not a reduce_sum plan");
  a.require_rank(2);
  const Dims2 d = a.dims2();
  if (d != plan.problem.sparse_operand()) throw ShapeError("A does not match the plan extents");
  const TileFn<T> fn = tile_fn<T>(resolve_kernel(plan, registry));
  const std::int64_t tl = plan.tile.shape.at(0);
  check_index_matches(plan, idx, d);
  if (!plan.is_dense() && plan.pit_axis->dim != 1) {
    throw std::invalid_argument("reduce_sum plans permute the reduced axis only");
  }
  ExecResult<T> res{DenseTensor<T>({d.rows}), 0};
  std::atomic<std::int64_t> launches{0};
  parallel_ranges(d.rows, options.workers, [&](std::int64_t p0, std::int64_t p1, int) {
    std::vector<T> buf(static_cast<std::size_t>(tl));
    std::int64_t local = 0;
    for (std::int64_t p = p0; p < p1; ++p) {
      T acc{0};
      if (plan.is_dense()) {
        for (std::int64_t l0 = 0; l0 < d.cols; l0 += tl) {
          std::fill(buf.begin(), buf.end(), T{0});
          for (std::int64_t l = l0; l < std::min(d.cols, l0 + tl); ++l) buf[static_cast<std::size_t>(l - l0)] = a.at(p, l);
          fn(buf.data(), nullptr, &acc);
          ++local;
        }
      } else {
        const auto grp = idx.group(p);
        for (std::size_t s = 0; s < grp.size(); s += static_cast<std::size_t>(tl)) {
          sread<T>(a, idx, p, buf, static_cast<std::int64_t>(s), tl);
          fn(buf.data(), nullptr, &acc);
          ++local;
        }
      }
      res.output.values()[static_cast<std::size_t>(p)] = acc;
    }
    launches += local;
  });
  res.launches = launches.load();
  return res;
}

template <typename T>
ExecResult<T> run_sparse_reduce_sum(const SparseKernelPlan& plan, const DenseTensor<T>& a,
                                    const SparsityAnnotation& ann, const KernelRegistry& registry,
                                    const ExecOptions& options) {
  if (ann.shape() != a.dims2()) throw ShapeError("annotation shape does not match A");
  if (plan.is_dense()) return run_sparse_reduce_sum(plan, a, MicroTileIndex{}, registry, options);
  const MicroTileIndex idx = build_index(ann, plan.micro_tile, *plan.pit_axis, options.workers);
  return run_sparse_reduce_sum(plan, a, idx, registry, options);
}

template <typename T>
DenseTensor<double> reduce_sum_reference(const DenseTensor<T>& a) {
  a.require_rank(2);
  DenseTensor<double> c({a.extent(0)});
  for (std::int64_t p = 0; p < a.extent(0); ++p) {
    double s = 0.0;
    for (std::int64_t l = 0; l < a.extent(1); ++l) s += a.at(p, l);
    c.values()[static_cast<std::size_t>(p)] = s;
  }
  return c;
}

template <typename T>
double max_relative_error(const DenseTensor<T>& got, const DenseTensor<double>& ref,
                          double abs_floor) {
  if (got.shape() != ref.shape()) throw ShapeError("cannot compare tensors of different shapes");
  double scale = 0.0;
  for (double v : ref.values()) scale = std::max(scale, std::abs(v));
  double worst = 0.0;
  if (got.layout() == ref.layout()) {
    for (std::size_t i = 0; i < ref.values().size(); ++i) {
      const double diff = std::abs(static_cast<double>(got.values()[i]) - ref.values()[i]);
      if (std::isnan(diff)) return std::numeric_limits<double>::infinity();
      worst = std::max(worst, diff);
    }
  } else {
    const Dims2 d = got.dims2();
    for (std::int64_t r = 0; r < d.rows; ++r) {
      for (std::int64_t c = 0; c < d.cols; ++c) {
        const double diff = std::abs(static_cast<double>(got.at(r, c)) - ref.at(r, c));
        if (std::isnan(diff)) return std::numeric_limits<double>::infinity();
        worst = std::max(worst, diff);
      }
    }
  }
  return worst / std::max(scale, abs_floor);
}

Permutation::Permutation(std::string axis, std::vector<std::int64_t> mapping)
    : axis_(std::move(axis)), mapping_(std::move(mapping)) {
  std::vector<bool> seen(mapping_.size(), false);
  for (auto v : mapping_) {
    if (v < 0 || v >= extent() || seen[static_cast<std::size_t>(v)]) {
      throw std::invalid_argument("permutation mapping on '" + axis_ + "' is not a bijection");
    }
    seen[static_cast<std::size_t>(v)] = true;
  }
}

Permutation Permutation::identity(std::string axis, std::int64_t extent) {
  std::vector<std::int64_t> m(static_cast<std::size_t>(extent));
  std::iota(m.begin(), m.end(), 0);
  return Permutation(std::move(axis), std::move(m));
}

Permutation Permutation::random(std::string axis, std::int64_t extent, std::uint64_t seed) {
  std::vector<std::int64_t> m(static_cast<std::size_t>(extent));
  std::iota(m.begin(), m.end(), 0);
  std::mt19937_64 rng(seed);
  for (std::size_t i = m.size(); i > 1; --i) {
    std::swap(m[i - 1], m[static_cast<std::size_t>(rng() % i)]);
  }
  return Permutation(std::move(axis), std::move(m));
}

Permutation invert(const Permutation& p) {
  std::vector<std::int64_t> inv(static_cast<std::size_t>(p.extent()));
  for (std::int64_t i = 0; i < p.extent(); ++i) inv[static_cast<std::size_t>(p(i))] = i;
  return Permutation(p.axis(), std::move(inv));
}

template <typename T>
DenseTensor<T> apply_permutation(const DenseTensor<T>& t, const Permutation& p, int dim) {
  if (dim < 0 || dim >= t.rank()) throw ShapeError("permutation dimension out of range");
  if (t.extent(dim) != p.extent()) {
    throw ShapeError("permutation on '" + p.axis() + "' has extent " + std::to_string(p.extent()) +
                     " but tensor dimension " + std::to_string(dim) + " has " +
                     std::to_string(t.extent(dim)));
  }
  DenseTensor<T> out(t.shape(), t.layout());
  std::vector<std::int64_t> idx(static_cast<std::size_t>(t.rank()), 0);
  std::vector<std::int64_t> moved(idx.size());
  for (std::int64_t n = 0; n < t.size(); ++n) {
    moved = idx;
    moved[static_cast<std::size_t>(dim)] = p(idx[static_cast<std::size_t>(dim)]);
    out.values()[static_cast<std::size_t>(out.offset(moved))] =
        t.values()[static_cast<std::size_t>(t.offset(idx))];
    for (std::size_t d = idx.size(); d-- > 0;) {
      if (++idx[d] < t.shape()[d]) break;
      idx[d] = 0;
    }
  }
  return out;
}

#define PIT_INSTANTIATE(T)                                                                     \
  template void sread(const DenseTensor<T>&, const MicroTileIndex&, std::int64_t, std::span<T>, \
                      std::int64_t, std::int64_t);                                             \
  template void swrite(std::span<const T>, DenseTensor<T>&, const MicroTileIndex&,             \
                       std::int64_t, std::int64_t, std::int64_t, WriteMode);                   \
  template ExecResult<T> run_sparse_matmul(const SparseKernelPlan&, const DenseTensor<T>&,     \
                                           const DenseTensor<T>&, const SparsityAnnotation&,   \
                                           const KernelRegistry&, const ExecOptions&);         \
  template ExecResult<T> run_sparse_matmul(const SparseKernelPlan&, const DenseTensor<T>&,     \
                                           const DenseTensor<T>&, const MicroTileIndex&,       \
                                           const KernelRegistry&, const ExecOptions&);         \
  template DenseTensor<double> run_dense_reference(const DenseTensor<T>&,                      \
                                                   const DenseTensor<T>&);                     \
  template ExecResult<T> run_sparse_reduce_sum(const SparseKernelPlan&, const DenseTensor<T>&, \
                                               const SparsityAnnotation&,                      \
                                               const KernelRegistry&, const ExecOptions&);     \
  template ExecResult<T> run_sparse_reduce_sum(const SparseKernelPlan&, const DenseTensor<T>&, \
                                               const MicroTileIndex&, const KernelRegistry&,   \
                                               const ExecOptions&);                            \
  template DenseTensor<double> reduce_sum_reference(const DenseTensor<T>&);                    \
  template double max_relative_error(const DenseTensor<T>&, const DenseTensor<double>&,        \
                                     double);                                                  \
  template DenseTensor<T> apply_permutation(const DenseTensor<T>&, const Permutation&, int);

PIT_INSTANTIATE(float)
PIT_INSTANTIATE(double)

#undef PIT_INSTANTIATE

}  // namespace pit
