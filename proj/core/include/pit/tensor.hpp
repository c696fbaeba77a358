#pragma once

#include <compare>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "pit/error.hpp"

namespace pit {

enum class Layout : std::uint8_t { kRowMajor = 0, kColMajor = 1 };
enum class DType : std::uint8_t { kF32 = 1, kF64 = 2 };

std::string to_string(Layout layout);

template <typename T>
constexpr DType dtype_of();
template <>
constexpr DType dtype_of<float>() { return DType::kF32; }
template <>
constexpr DType dtype_of<double>() { return DType::kF64; }

// Two-dimensional extents: tensor shapes, block granularities, micro-tiles.
struct Dims2 {
  std::int64_t rows = 0;
  std::int64_t cols = 0;

  std::int64_t area() const { return rows * cols; }
  auto operator<=>(const Dims2&) const = default;
};

std::string to_string(Dims2 d, char sep = 'x');

inline std::int64_t ceil_div(std::int64_t a, std::int64_t b) { return (a + b - 1) / b; }

// Owning dense tensor with a contiguous buffer. Rank-2 tensors may be stored
// column-major; higher ranks generalize as C order / Fortran order.
template <typename T>
class DenseTensor {
 public:
  using value_type = T;

  DenseTensor() = default;

  explicit DenseTensor(std::vector<std::int64_t> shape, Layout layout = Layout::kRowMajor)
      : shape_(std::move(shape)), layout_(layout) {
    values_.assign(checked_size(shape_), T{0});
  }

  DenseTensor(std::vector<std::int64_t> shape, std::vector<T> values,
              Layout layout = Layout::kRowMajor)
      : shape_(std::move(shape)), layout_(layout), values_(std::move(values)) {
    if (static_cast<std::int64_t>(values_.size()) != checked_size(shape_)) {
      throw ShapeError("tensor buffer length does not match the product of its shape");
    }
  }

  static DenseTensor matrix(Dims2 d, Layout layout = Layout::kRowMajor) {
    return DenseTensor({d.rows, d.cols}, layout);
  }

  const std::vector<std::int64_t>& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  std::int64_t extent(int dim) const { return shape_.at(static_cast<std::size_t>(dim)); }
  std::int64_t size() const { return static_cast<std::int64_t>(values_.size()); }
  Layout layout() const { return layout_; }
  Dims2 dims2() const {
    require_rank(2);
    return {shape_[0], shape_[1]};
  }

  std::span<T> values() { return values_; }
  std::span<const T> values() const { return values_; }
  T* data() { return values_.data(); }
  const T* data() const { return values_.data(); }

  std::int64_t offset(std::int64_t r, std::int64_t c) const {
    return layout_ == Layout::kRowMajor ? r * shape_[1] + c : c * shape_[0] + r;
  }
  T& at(std::int64_t r, std::int64_t c) { return values_[static_cast<std::size_t>(offset(r, c))]; }
  const T& at(std::int64_t r, std::int64_t c) const {
    return values_[static_cast<std::size_t>(offset(r, c))];
  }

  std::int64_t offset(std::span<const std::int64_t> idx) const {
    std::int64_t off = 0;
    if (layout_ == Layout::kRowMajor) {
      for (std::size_t d = 0; d < shape_.size(); ++d) off = off * shape_[d] + idx[d];
    } else {
      for (std::size_t d = shape_.size(); d-- > 0;) off = off * shape_[d] + idx[d];
    }
    return off;
  }

  void require_rank(int r) const {
    if (rank() != r) {
      throw ShapeError("expected a rank-" + std::to_string(r) + " tensor, got rank " +
                       std::to_string(rank()));
    }
  }

  bool operator==(const DenseTensor&) const = default;

 private:
  static std::int64_t checked_size(const std::vector<std::int64_t>& shape) {
    std::int64_t n = 1;
    for (auto e : shape) {
      if (e < 0) throw ShapeError("negative tensor extent");
      n *= e;
    }
    return n;
  }

  std::vector<std::int64_t> shape_;
  Layout layout_ = Layout::kRowMajor;
  std::vector<T> values_;
};

// Copy of a rank-2 tensor re-laid out in `layout`.
template <typename T>
DenseTensor<T> to_layout(const DenseTensor<T>& t, Layout layout) {
  const Dims2 d = t.dims2();
  if (t.layout() == layout) return t;
  DenseTensor<T> out = DenseTensor<T>::matrix(d, layout);
  for (std::int64_t r = 0; r < d.rows; ++r) {
    for (std::int64_t c = 0; c < d.cols; ++c) out.at(r, c) = t.at(r, c);
  }
  return out;
}

}  // namespace pit
