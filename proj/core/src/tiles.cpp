#include "pit/tiles.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "pit/error.hpp"

namespace pit {

std::string to_string(OpKind op) {
  switch (op) {
    case OpKind::kMatMul: return "matmul";
    case OpKind::kReduceSum: return "reduce_sum";
    case OpKind::kVecAdd: return "vec_add";
  }
  return "?";
}

OpKind op_kind_from_string(const std::string& name) {
  if (name == "matmul") return OpKind::kMatMul;
  if (name == "reduce_sum") return OpKind::kReduceSum;
  if (name == "vec_add") return OpKind::kVecAdd;
  throw std::invalid_argument("unknown operator kind '" + name + "'");
}

std::int64_t TileKernelDescriptor::flops() const {
  switch (op) {
    case OpKind::kMatMul: return 2 * shape.at(0) * shape.at(1) * shape.at(2);
    case OpKind::kReduceSum: return shape.at(0);
    case OpKind::kVecAdd: return shape.at(0);
  }
  return 0;
}

std::int64_t TileKernelDescriptor::a_size() const {
  return op == OpKind::kMatMul ? shape.at(0) * shape.at(1) : shape.at(0);
}

std::int64_t TileKernelDescriptor::b_size() const {
  switch (op) {
    case OpKind::kMatMul: return shape.at(1) * shape.at(2);
    case OpKind::kReduceSum: return 0;
    case OpKind::kVecAdd: return shape.at(0);
  }
  return 0;
}

std::int64_t TileKernelDescriptor::c_size() const {
  switch (op) {
    case OpKind::kMatMul: return shape.at(0) * shape.at(2);
    case OpKind::kReduceSum: return 1;
    case OpKind::kVecAdd: return shape.at(0);
  }
  return 0;
}

std::string TileKernelDescriptor::shape_string() const {
  std::string s;
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += 'x';
    s += std::to_string(shape[i]);
  }
  return s;
}

namespace {

template <typename T>
struct SimdVec;
template <>
struct SimdVec<float> {
  typedef float type __attribute__((vector_size(64)));
};
template <>
struct SimdVec<double> {
  typedef double type __attribute__((vector_size(64)));
};

template <typename V, typename T>
inline V load_vec(const T* p) {
  V v;
  std::memcpy(&v, p, sizeof(V));
  return v;
}

template <typename V, typename T>
inline void store_vec(T* p, V v) {
  std::memcpy(p, &v, sizeof(V));
}

// C[M,N] += A[M,K] * B[K,N]. Rows are processed in register blocks of kRows
// with two-vector accumulator strips so each B load feeds kRows FMAs. Every
// row goes through the same arithmetic regardless of its position in the tile.
template <typename T, int M, int K, int N>
void matmul_tile(const T* __restrict a, const T* __restrict b, T* __restrict c) {
  using V = typename SimdVec<T>::type;
  constexpr int kLanes = static_cast<int>(sizeof(V) / sizeof(T));
  constexpr int kVecs = 2;
  constexpr int kCols = kLanes * kVecs;
  constexpr int kRows = M % 4 == 0 ? 4 : 1;
  if constexpr (N % kCols != 0) {
    for (int i = 0; i < M; ++i) {
      for (int k = 0; k < K; ++k) {
        const T av = a[i * K + k];
        for (int j = 0; j < N; ++j) c[i * N + j] += av * b[k * N + j];
      }
    }
  } else {
    for (int i0 = 0; i0 < M; i0 += kRows) {
      for (int j0 = 0; j0 < N; j0 += kCols) {
        V acc[kRows][kVecs];
        for (int r = 0; r < kRows; ++r) {
          for (int v = 0; v < kVecs; ++v) acc[r][v] = load_vec<V>(c + (i0 + r) * N + j0 + v * kLanes);
        }
        for (int k = 0; k < K; ++k) {
          V bv[kVecs];
          for (int v = 0; v < kVecs; ++v) bv[v] = load_vec<V>(b + k * N + j0 + v * kLanes);
          for (int r = 0; r < kRows; ++r) {
            const T av = a[(i0 + r) * K + k];
            for (int v = 0; v < kVecs; ++v) acc[r][v] += av * bv[v];
          }
        }
        for (int r = 0; r < kRows; ++r) {
          for (int v = 0; v < kVecs; ++v) store_vec(c + (i0 + r) * N + j0 + v * kLanes, acc[r][v]);
        }
      }
    }
  }
}

template <typename T, int L>
void reduce_sum_tile(const T* __restrict a, const T*, T* __restrict c) {
  T s = c[0];
  for (int i = 0; i < L; ++i) s += a[i];
  c[0] = s;
}

template <typename T, int P>
void vec_add_tile(const T* __restrict a, const T* __restrict b, T* __restrict c) {
  for (int i = 0; i < P; ++i) c[i] = a[i] + b[i];
}

template <int M, int K, int N>
TileKernel matmul_kernel() {
  TileKernel k;
  k.desc.op = OpKind::kMatMul;
  k.desc.shape = {M, K, N};
  k.desc.impl_id = "mm_blocked_" + std::to_string(M) + "x" + std::to_string(K) + "x" +
                   std::to_string(N);
  k.desc.layouts = {Layout::kRowMajor, Layout::kRowMajor, Layout::kRowMajor};
  k.f32 = &matmul_tile<float, M, K, N>;
  k.f64 = &matmul_tile<double, M, K, N>;
  return k;
}

template <int L>
TileKernel reduce_kernel() {
  TileKernel k;
  k.desc.op = OpKind::kReduceSum;
  k.desc.shape = {L};
  k.desc.impl_id = "reduce_seq_" + std::to_string(L);
  k.desc.layouts = {Layout::kRowMajor, Layout::kRowMajor};
  k.f32 = &reduce_sum_tile<float, L>;
  k.f64 = &reduce_sum_tile<double, L>;
  return k;
}

template <int P>
TileKernel vec_add_kernel() {
  TileKernel k;
  k.desc.op = OpKind::kVecAdd;
  k.desc.shape = {P};
  k.desc.impl_id = "vadd_" + std::to_string(P);
  k.desc.layouts = {Layout::kRowMajor, Layout::kRowMajor, Layout::kRowMajor};
  k.f32 = &vec_add_tile<float, P>;
  k.f64 = &vec_add_tile<double, P>;
  return k;
}

}  // namespace

void KernelRegistry::add(TileKernel kernel) {
  if (find_impl(kernel.desc.impl_id) != nullptr) {
    throw std::invalid_argument("duplicate tile implementation id '" + kernel.desc.impl_id + "'");
  }
  for (auto e : kernel.desc.shape) {
    if (e <= 0) throw std::invalid_argument("tile dimensions must be positive");
  }
  kernels_.push_back(std::move(kernel));
}

const TileKernel* KernelRegistry::find(OpKind op, std::span<const std::int64_t> shape) const {
  for (const auto& k : kernels_) {
    if (k.desc.op == op && std::equal(k.desc.shape.begin(), k.desc.shape.end(), shape.begin(),
                                      shape.end())) {
      return &k;
    }
  }
  return nullptr;
}

const TileKernel* KernelRegistry::find_impl(const std::string& impl_id) const {
  for (const auto& k : kernels_) {
    if (k.desc.impl_id == impl_id) return &k;
  }
  return nullptr;
}

std::vector<const TileKernel*> KernelRegistry::for_op(OpKind op) const {
  std::vector<const TileKernel*> out;
  for (const auto& k : kernels_) {
    if (k.desc.op == op) out.push_back(&k);
  }
  return out;
}

KernelRegistry register_builtin_kernels() {
  KernelRegistry reg;
  reg.add(matmul_kernel<8, 32, 128>());
  reg.add(matmul_kernel<16, 32, 128>());
  reg.add(matmul_kernel<32, 64, 32>());
  reg.add(matmul_kernel<32, 32, 32>());
  reg.add(reduce_kernel<32>());
  reg.add(reduce_kernel<128>());
  reg.add(vec_add_kernel<256>());
  return reg;
}

template <>
TileFn<float> tile_fn<float>(const TileKernel& kernel) {
  return kernel.f32;
}
template <>
TileFn<double> tile_fn<double>(const TileKernel& kernel) {
  return kernel.f64;
}

template <typename T>
void run_tile(const TileKernel& kernel, std::span<const T> a, std::span<const T> b, std::span<T> c) {
  const auto& d = kernel.desc;
  if (static_cast<std::int64_t>(a.size()) != d.a_size() ||
      static_cast<std::int64_t>(b.size()) != d.b_size() ||
      static_cast<std::int64_t>(c.size()) != d.c_size()) {
    throw ShapeError("tile buffers do not match " + to_string(d.op) + " tile " + d.shape_string());
  }
  tile_fn<T>(kernel)(a.data(), b.data(), c.data());
}

template void run_tile(const TileKernel&, std::span<const float>, std::span<const float>,
                       std::span<float>);
template void run_tile(const TileKernel&, std::span<const double>, std::span<const double>,
                       std::span<double>);

ProfileKey profile_key(const TileKernelDescriptor& desc) {
  return {desc.op, desc.shape, desc.impl_id};
}

double ProfileTable::cost(const TileKernelDescriptor& desc) const {
  auto it = costs.find(profile_key(desc));
  if (it == costs.end()) {
    throw std::invalid_argument("profile has no entry for " + desc.impl_id);
  }
  return it->second;
}

bool ProfileTable::covers(const KernelRegistry& registry) const {
  return std::all_of(registry.kernels().begin(), registry.kernels().end(),
                     [&](const TileKernel& k) { return costs.count(profile_key(k.desc)) > 0; });
}

std::string machine_fingerprint() {
  std::string model = "unknown-cpu";
  std::ifstream cpuinfo("/proc/cpuinfo");
  std::string line;
  while (std::getline(cpuinfo, line)) {
    if (line.rfind("model name", 0) == 0) {
      auto colon = line.find(':');
      if (colon != std::string::npos) {
        model = line.substr(colon + 1);
        model.erase(0, model.find_first_not_of(' '));
      }
      break;
    }
  }
  return model + ";threads=" + std::to_string(std::thread::hardware_concurrency());
}

double round_cost(double seconds) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", seconds);
  return std::strtod(buf, nullptr);
}

double profile_kernel(const TileKernel& kernel, const ProfileOptions& options) {
  if (options.reps < 1) throw std::invalid_argument("profile reps must be at least 1");
  using Clock = std::chrono::steady_clock;
  const auto& d = kernel.desc;
  std::mt19937 rng(12345);
  std::uniform_real_distribution<float> dist(-1e-3f, 1e-3f);
  std::vector<float> a(static_cast<std::size_t>(d.a_size()));
  std::vector<float> b(static_cast<std::size_t>(std::max<std::int64_t>(d.b_size(), 1)));
  std::vector<float> c(static_cast<std::size_t>(d.c_size()), 0.0f);
  for (auto& v : a) v = dist(rng);
  for (auto& v : b) v = dist(rng);
  const TileFn<float> fn = kernel.f32;

  auto batch = [&](int n) {
    const auto t0 = Clock::now();
    for (int i = 0; i < n; ++i) fn(a.data(), b.data(), c.data());
    return std::chrono::duration<double>(Clock::now() - t0).count();
  };

  int inner = options.reps_inner;
  if (inner <= 0) {
    inner = 1;
    while (batch(inner) < options.target_batch_seconds && inner < (1 << 24)) inner *= 2;
  }
  for (int w = 0; w < options.warmup; ++w) batch(inner);

  std::vector<double> samples;
  for (int r = 0; r < options.reps; ++r) samples.push_back(batch(inner) / inner);
  std::nth_element(samples.begin(), samples.begin() + samples.size() / 2, samples.end());
  double median = samples[samples.size() / 2];
  if (!(median > 0.0)) {
    throw std::runtime_error("clock failure: non-positive tile time for " + d.impl_id);
  }
  // Keep the result observable so the calls are not elided.
  volatile float sink = c[0];
  (void)sink;
  return median;
}

ProfileTable profile(const KernelRegistry& registry, const ProfileOptions& options) {
  ProfileTable table;
  table.fingerprint = machine_fingerprint();
  table.reps = options.reps;
  for (const auto& k : registry.kernels()) {
    table.costs[profile_key(k.desc)] = round_cost(profile_kernel(k, options));
  }
  return table;
}

void write_profile(std::ostream& out, const ProfileTable& table) {
  out << "pit-profile v1\n";
  out << "fingerprint " << table.fingerprint << '\n';
  out << "reps " << table.reps << '\n';
  char buf[64];
  for (const auto& [key, cost] : table.costs) {
    out << to_string(key.op);
    for (auto e : key.shape) out << ' ' << e;
    std::snprintf(buf, sizeof buf, "%.9g", cost);
    out << ' ' << key.impl_id << ' ' << buf << '\n';
  }
}

namespace {

std::size_t expected_dims(OpKind op) { return op == OpKind::kMatMul ? 3 : 1; }

}  // namespace

ProfileTable read_profile(std::istream& in) {
  ProfileTable table;
  std::string line;
  std::size_t line_no = 0;
  auto next = [&](const char* what) {
    ++line_no;
    if (!std::getline(in, line)) {
      throw ParseError("profile line " + std::to_string(line_no) + ": missing " + what, line_no);
    }
  };
  next("header");
  if (line != "pit-profile v1") {
    throw ParseError("profile line 1: expected 'pit-profile v1'", line_no);
  }
  next("fingerprint");
  if (line.rfind("fingerprint ", 0) != 0) {
    throw ParseError("profile line 2: expected 'fingerprint <text>'", line_no);
  }
  table.fingerprint = line.substr(12);
  next("reps");
  {
    std::istringstream ss(line);
    std::string kw;
    if (!(ss >> kw >> table.reps) || kw != "reps") {
      throw ParseError("profile line 3: expected 'reps <n>'", line_no);
    }
  }
  while (true) {
    ++line_no;
    if (!std::getline(in, line)) break;
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string op_name;
    ss >> op_name;
    auto fail = [&](const std::string& why) {
      throw ParseError("profile line " + std::to_string(line_no) + ": " + why, line_no);
    };
    OpKind op;
    try {
      op = op_kind_from_string(op_name);
    } catch (const std::invalid_argument&) {
      fail("unknown operator '" + op_name + "'");
    }
    ProfileKey key{op, {}, {}};
    for (std::size_t i = 0; i < expected_dims(op); ++i) {
      std::int64_t e = 0;
      if (!(ss >> e) || e <= 0) fail("bad tile dimension");
      key.shape.push_back(e);
    }
    std::string cost_text;
    if (!(ss >> key.impl_id >> cost_text)) fail("expected '<impl_id> <cost_seconds>'");
    std::string extra;
    if (ss >> extra) fail("trailing text");
    char* end = nullptr;
    const double cost = std::strtod(cost_text.c_str(), &end);
    if (end == cost_text.c_str() || *end != '\0' || !(cost > 0.0) || !std::isfinite(cost)) {
      fail("cost must be a positive number");
    }
    table.costs[key] = cost;
  }
  table.foreign_fingerprint = table.fingerprint != machine_fingerprint();
  return table;
}

void save_profile(const ProfileTable& table, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  write_profile(out, table);
  if (!out) throw IoError("failed writing '" + path + "'");
}

ProfileTable load_profile(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open profile '" + path + "'");
  return read_profile(in);
}

}  // namespace pit
