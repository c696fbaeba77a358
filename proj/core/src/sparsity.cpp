#include "pit/sparsity.hpp"

#include <bit>
#include <cstdint>
#include <fstream>
#include <istream>
#include <ostream>
#include <random>
#include <sstream>

#include "pit/error.hpp"

namespace pit {

SparsityAnnotation::SparsityAnnotation(Dims2 shape, Dims2 granularity)
    : shape_(shape), granularity_(granularity) {
  if (granularity.rows <= 0 || granularity.cols <= 0) {
    throw std::invalid_argument("sparsity granularity must be positive");
  }
  if (shape.rows < 0 || shape.cols < 0) throw ShapeError("negative annotation shape");
  grid_ = {ceil_div(shape.rows, granularity.rows), ceil_div(shape.cols, granularity.cols)};
  bits_.assign(static_cast<std::size_t>(ceil_div(grid_.area(), 64)), 0);
}

void SparsityAnnotation::set(std::int64_t block_row, std::int64_t block_col, bool value) {
  if (block_row < 0 || block_row >= grid_.rows || block_col < 0 || block_col >= grid_.cols) {
    throw std::out_of_range("block coordinate outside the annotation grid");
  }
  const auto bit = static_cast<std::uint64_t>(block_row * grid_.cols + block_col);
  const std::uint64_t mask = std::uint64_t{1} << (bit & 63);
  if (value) {
    bits_[bit >> 6] |= mask;
  } else {
    bits_[bit >> 6] &= ~mask;
  }
}

bool SparsityAnnotation::any_in(std::int64_t row_begin, std::int64_t row_end,
                                std::int64_t col_begin, std::int64_t col_end) const {
  row_end = std::min(row_end, grid_.rows);
  col_end = std::min(col_end, grid_.cols);
  for (std::int64_t r = row_begin; r < row_end; ++r) {
    auto first = static_cast<std::uint64_t>(r * grid_.cols + col_begin);
    const auto last = static_cast<std::uint64_t>(r * grid_.cols + col_end);
    while (first < last) {
      const std::uint64_t word = first >> 6;
      const std::uint64_t lo = first & 63;
      const std::uint64_t hi = std::min<std::uint64_t>(64, lo + (last - first));
      std::uint64_t mask = hi == 64 ? ~std::uint64_t{0} : ((std::uint64_t{1} << hi) - 1);
      mask &= ~((std::uint64_t{1} << lo) - 1);
      if (bits_[word] & mask) return true;
      first += hi - lo;
    }
  }
  return false;
}

std::int64_t SparsityAnnotation::nonzero_blocks() const {
  std::int64_t n = 0;
  for (auto w : bits_) n += std::popcount(w);
  return n;
}

double SparsityAnnotation::sparsity_ratio() const {
  if (block_count() == 0) return 0.0;
  return static_cast<double>(block_count() - nonzero_blocks()) /
         static_cast<double>(block_count());
}

DenseTensor<float> SparsityAnnotation::materialize() const {
  auto mask = DenseTensor<float>::matrix(shape_);
  for (std::int64_t r = 0; r < shape_.rows; ++r) {
    for (std::int64_t c = 0; c < shape_.cols; ++c) {
      if (test(r / granularity_.rows, c / granularity_.cols)) mask.at(r, c) = 1.0f;
    }
  }
  return mask;
}

SparsityAnnotation SparsityAnnotation::coarsen(std::int64_t row_factor,
                                               std::int64_t col_factor) const {
  if (row_factor <= 0 || col_factor <= 0) {
    throw std::invalid_argument("coarsening factors must be positive");
  }
  SparsityAnnotation out(shape_, {granularity_.rows * row_factor, granularity_.cols * col_factor});
  for (std::int64_t r = 0; r < out.grid_.rows; ++r) {
    for (std::int64_t c = 0; c < out.grid_.cols; ++c) {
      if (any_in(r * row_factor, (r + 1) * row_factor, c * col_factor, (c + 1) * col_factor)) {
        out.set(r, c);
      }
    }
  }
  return out;
}

template <typename T>
SparsityAnnotation from_mask(const DenseTensor<T>& mask, std::span<const std::int64_t> granularity) {
  if (mask.rank() != 2 || granularity.size() != 2) {
    throw ShapeError("annotation requires a rank-2 mask and a rank-2 granularity");
  }
  if (granularity[0] <= 0 || granularity[1] <= 0) {
    throw std::invalid_argument("sparsity granularity must be positive");
  }
  const Dims2 shape = mask.dims2();
  SparsityAnnotation ann(shape, {granularity[0], granularity[1]});
  for (std::int64_t r = 0; r < shape.rows; ++r) {
    for (std::int64_t c = 0; c < shape.cols; ++c) {
      if (mask.at(r, c) != T{0}) ann.set(r / granularity[0], c / granularity[1]);
    }
  }
  return ann;
}

template SparsityAnnotation from_mask(const DenseTensor<float>&, std::span<const std::int64_t>);
template SparsityAnnotation from_mask(const DenseTensor<double>&, std::span<const std::int64_t>);
template SparsityAnnotation from_mask(const DenseTensor<std::uint8_t>&,
                                      std::span<const std::int64_t>);

SparsityAnnotation from_ragged_lengths(std::span<const std::int64_t> lengths, Dims2 padded_shape) {
  if (static_cast<std::int64_t>(lengths.size()) != padded_shape.rows) {
    throw ShapeError("ragged lengths must provide one length per batch row");
  }
  SparsityAnnotation ann(padded_shape, {1, 1});
  for (std::int64_t b = 0; b < padded_shape.rows; ++b) {
    const std::int64_t len = lengths[static_cast<std::size_t>(b)];
    if (len < 0 || len > padded_shape.cols) {
      throw ShapeError("sequence length " + std::to_string(len) + " exceeds padded length " +
                       std::to_string(padded_shape.cols));
    }
    for (std::int64_t c = 0; c < len; ++c) ann.set(b, c);
  }
  return ann;
}

SparsityAnnotation random_annotation(Dims2 shape, Dims2 granularity, double zero_ratio,
                                     std::uint64_t seed) {
  if (!(zero_ratio >= 0.0 && zero_ratio <= 1.0)) {
    throw std::invalid_argument("zero_ratio must lie in [0, 1]");
  }
  SparsityAnnotation ann(shape, granularity);
  std::mt19937_64 rng(seed);
  for (std::int64_t r = 0; r < ann.grid().rows; ++r) {
    for (std::int64_t c = 0; c < ann.grid().cols; ++c) {
      const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
      if (u >= zero_ratio) ann.set(r, c);
    }
  }
  return ann;
}

void write_annotation(std::ostream& out, const SparsityAnnotation& ann) {
  out << "shape " << ann.shape().rows << ' ' << ann.shape().cols << '\n';
  out << "granularity " << ann.granularity().rows << ' ' << ann.granularity().cols << '\n';
  std::string line;
  for (std::int64_t r = 0; r < ann.grid().rows; ++r) {
    line.assign(static_cast<std::size_t>(ann.grid().cols), '0');
    for (std::int64_t c = 0; c < ann.grid().cols; ++c) {
      if (ann.test(r, c)) line[static_cast<std::size_t>(c)] = '1';
    }
    out << line << '\n';
  }
}

namespace {

Dims2 read_pair(std::istream& in, const char* keyword, std::size_t line_no) {
  std::string line;
  if (!std::getline(in, line)) {
    throw ParseError("annotation: missing '" + std::string(keyword) + "' line", line_no);
  }
  std::istringstream ss(line);
  std::string kw;
  Dims2 d;
  std::string extra;
  if (!(ss >> kw >> d.rows >> d.cols) || kw != keyword || (ss >> extra)) {
    throw ParseError("annotation line " + std::to_string(line_no) + ": expected '" + keyword +
                         " <int> <int>'",
                     line_no);
  }
  return d;
}

}  // namespace

SparsityAnnotation read_annotation(std::istream& in) {
  const Dims2 shape = read_pair(in, "shape", 1);
  const Dims2 gran = read_pair(in, "granularity", 2);
  if (shape.rows < 0 || shape.cols < 0 || gran.rows <= 0 || gran.cols <= 0) {
    throw ParseError("annotation line 2: invalid shape or granularity", 2);
  }
  SparsityAnnotation ann(shape, gran);
  std::string line;
  for (std::int64_t r = 0; r < ann.grid().rows; ++r) {
    const std::size_t line_no = static_cast<std::size_t>(r) + 3;
    if (!std::getline(in, line)) {
      throw ParseError("annotation line " + std::to_string(line_no) + ": missing block row",
                       line_no);
    }
    if (static_cast<std::int64_t>(line.size()) != ann.grid().cols) {
      throw ParseError("annotation line " + std::to_string(line_no) + ": expected " +
                           std::to_string(ann.grid().cols) + " bits",
                       line_no);
    }
    for (std::int64_t c = 0; c < ann.grid().cols; ++c) {
      const char ch = line[static_cast<std::size_t>(c)];
      if (ch != '0' && ch != '1') {
        throw ParseError("annotation line " + std::to_string(line_no) + ": bit must be 0 or 1",
                         line_no);
      }
      if (ch == '1') ann.set(r, c);
    }
  }
  return ann;
}

void save_annotation(const SparsityAnnotation& ann, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  write_annotation(out, ann);
  if (!out) throw IoError("failed writing '" + path + "'");
}

SparsityAnnotation load_annotation(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");
  return read_annotation(in);
}

}  // namespace pit
