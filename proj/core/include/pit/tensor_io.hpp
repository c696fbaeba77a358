#pragma once

#include <iosfwd>
#include <string>
#include <variant>

#include "pit/tensor.hpp"

namespace pit {

using AnyTensor = std::variant<DenseTensor<float>, DenseTensor<double>>;

// Binary layout, all integers little-endian:
//   bytes 0-3   magic "PITT"
//   byte  4     dtype (1 = f32, 2 = f64)
//   byte  5     layout (0 = row-major, 1 = column-major)
//   bytes 6-7   zero
//   bytes 8-15  rank (u64)
//   rank x u64  extents
//   values in declared layout
template <typename T>
void write_tensor(std::ostream& out, const DenseTensor<T>& t);
AnyTensor read_tensor(std::istream& in);

template <typename T>
void save_tensor(const DenseTensor<T>& t, const std::string& path);
AnyTensor load_tensor(const std::string& path);

}  // namespace pit
