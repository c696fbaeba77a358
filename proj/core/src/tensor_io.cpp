#include "pit/tensor_io.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "pit/error.hpp"

namespace pit {

std::string to_string(Layout layout) {
  return layout == Layout::kRowMajor ? "row-major" : "col-major";
}

std::string to_string(Dims2 d, char sep) {
  return std::to_string(d.rows) + sep + std::to_string(d.cols);
}

namespace {

static_assert(std::endian::native == std::endian::little,
              "tensor files are written by copying little-endian memory");

void put_u64(std::ostream& out, std::uint64_t v) {
  std::array<char, 8> b;
  for (int i = 0; i < 8; ++i) b[static_cast<std::size_t>(i)] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(b.data(), 8);
}

std::uint64_t get_u64(std::istream& in) {
  std::array<unsigned char, 8> b{};
  if (!in.read(reinterpret_cast<char*>(b.data()), 8)) throw IoError("tensor file truncated");
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | b[static_cast<std::size_t>(i)];
  return v;
}

template <typename T>
DenseTensor<T> read_values(std::istream& in, std::vector<std::int64_t> shape, Layout layout) {
  DenseTensor<T> t(std::move(shape), layout);
  const auto bytes = static_cast<std::streamsize>(t.values().size_bytes());
  if (!in.read(reinterpret_cast<char*>(t.data()), bytes)) throw IoError("tensor file truncated");
  return t;
}

}  // namespace

template <typename T>
void write_tensor(std::ostream& out, const DenseTensor<T>& t) {
  const char header[8] = {'P', 'I', 'T', 'T', static_cast<char>(dtype_of<T>()),
                          static_cast<char>(t.layout()), 0, 0};
  out.write(header, 8);
  put_u64(out, static_cast<std::uint64_t>(t.rank()));
  for (auto e : t.shape()) put_u64(out, static_cast<std::uint64_t>(e));
  out.write(reinterpret_cast<const char*>(t.data()),
            static_cast<std::streamsize>(t.values().size_bytes()));
}

AnyTensor read_tensor(std::istream& in) {
  char header[8];
  if (!in.read(header, 8)) throw IoError("tensor file truncated");
  if (std::memcmp(header, "PITT", 4) != 0) throw IoError("not a tensor file (bad magic)");
  const auto dtype = static_cast<DType>(header[4]);
  const auto layout_code = static_cast<std::uint8_t>(header[5]);
  if (layout_code > 1) throw IoError("tensor file has unknown layout code");
  const auto layout = static_cast<Layout>(layout_code);
  const std::uint64_t rank = get_u64(in);
  if (rank > 16) throw IoError("tensor file rank too large");
  std::vector<std::int64_t> shape;
  for (std::uint64_t i = 0; i < rank; ++i) shape.push_back(static_cast<std::int64_t>(get_u64(in)));
  switch (dtype) {
    case DType::kF32: return read_values<float>(in, std::move(shape), layout);
    case DType::kF64: return read_values<double>(in, std::move(shape), layout);
  }
  throw IoError("tensor file has unknown dtype code");
}

template <typename T>
void save_tensor(const DenseTensor<T>& t, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  write_tensor(out, t);
  if (!out) throw IoError("failed writing '" + path + "'");
}

AnyTensor load_tensor(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  return read_tensor(in);
}

template void write_tensor(std::ostream&, const DenseTensor<float>&);
template void write_tensor(std::ostream&, const DenseTensor<double>&);
template void save_tensor(const DenseTensor<float>&, const std::string&);
template void save_tensor(const DenseTensor<double>&, const std::string&);

}  // namespace pit
