#include "spamri/tensor_io.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <string>

#include "spamri/error.hpp"

namespace spamri {

namespace {

constexpr std::array<char, 4> kMagic{'C', 'X', 'G', '1'};
constexpr std::uint8_t kMaxDims = 8;

static_assert(std::endian::native == std::endian::little,
              "CXG1 I/O assumes a little-endian host");

void require(bool ok, const char* what) {
  if (!ok) throw Error(ErrorCode::Format, what);
}

template <typename T>
void write_raw(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_raw(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  require(static_cast<bool>(is), "unexpected end of stream");
  return v;
}

}  // namespace

std::size_t dtype_size(DType t) {
  switch (t) {
    case DType::Complex64: return 8;
    case DType::Float32: return 4;
    case DType::U8: return 1;
  }
  throw Error(ErrorCode::Format, "unknown dtype");
}

std::size_t Tensor::element_count() const {
  std::size_t n = 1;
  for (auto d : dims) n *= static_cast<std::size_t>(d);
  return n;
}

namespace detail {

void write_dims(std::ostream& os, const std::vector<std::uint64_t>& dims) {
  require(dims.size() <= kMaxDims, "too many dimensions");
  write_raw(os, static_cast<std::uint8_t>(dims.size()));
  for (auto d : dims) write_raw(os, d);
}

std::vector<std::uint64_t> read_dims(std::istream& is) {
  const auto ndim = read_raw<std::uint8_t>(is);
  require(ndim <= kMaxDims, "too many dimensions");
  std::vector<std::uint64_t> dims(ndim);
  std::uint64_t total = 1;
  for (auto& d : dims) {
    d = read_raw<std::uint64_t>(is);
    require(d > 0 && d < (std::uint64_t{1} << 32), "dimension out of range");
    total *= d;
    require(total < (std::uint64_t{1} << 34), "tensor too large");
  }
  return dims;
}

void write_le_u16(std::ostream& os, std::uint16_t v) { write_raw(os, v); }
std::uint16_t read_le_u16(std::istream& is) { return read_raw<std::uint16_t>(is); }

void write_f32_payload(std::ostream& os, std::span<const float> values) {
  os.write(reinterpret_cast<const char*>(values.data()),
           static_cast<std::streamsize>(values.size_bytes()));
}

std::vector<float> read_f32_payload(std::istream& is, std::size_t count) {
  std::vector<float> out(count);
  is.read(reinterpret_cast<char*>(out.data()), static_cast<std::streamsize>(count * sizeof(float)));
  require(static_cast<bool>(is), "truncated float payload");
  return out;
}

}  // namespace detail

void write_tensor(std::ostream& os, const Tensor& t) {
  require(t.payload.size() == t.element_count() * dtype_size(t.dtype),
          "payload size does not match dims");
  os.write(kMagic.data(), kMagic.size());
  write_raw(os, static_cast<std::uint8_t>(t.dtype));
  detail::write_dims(os, t.dims);
  os.write(reinterpret_cast<const char*>(t.payload.data()),
           static_cast<std::streamsize>(t.payload.size()));
  if (!os) throw Error(ErrorCode::Io, "failed writing tensor");
}

Tensor read_tensor(std::istream& is) {
  std::array<char, 4> magic{};
  is.read(magic.data(), magic.size());
  require(static_cast<bool>(is) && magic == kMagic, "bad CXG1 magic");
  Tensor t;
  const auto code = read_raw<std::uint8_t>(is);
  require(code <= 2, "unknown dtype code");
  t.dtype = static_cast<DType>(code);
  t.dims = detail::read_dims(is);
  t.payload.resize(t.element_count() * dtype_size(t.dtype));
  is.read(reinterpret_cast<char*>(t.payload.data()), static_cast<std::streamsize>(t.payload.size()));
  require(static_cast<bool>(is), "truncated payload");
  return t;
}

void save_tensor(const std::filesystem::path& path, const Tensor& t) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error(ErrorCode::Io, "cannot open " + path.string() + " for writing");
  write_tensor(os, t);
}

Tensor load_tensor(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorCode::Io, "cannot open " + path.string());
  return read_tensor(is);
}

Tensor make_complex_tensor(std::vector<std::uint64_t> dims, std::span<const cplx> values) {
  Tensor t{DType::Complex64, std::move(dims), {}};
  require(t.element_count() == values.size(), "value count does not match dims");
  t.payload.resize(values.size() * 8);
  auto* out = reinterpret_cast<float*>(t.payload.data());
  for (std::size_t i = 0; i < values.size(); ++i) {
    out[2 * i] = static_cast<float>(values[i].real());
    out[2 * i + 1] = static_cast<float>(values[i].imag());
  }
  return t;
}

Tensor make_float_tensor(std::vector<std::uint64_t> dims, std::span<const float> values) {
  Tensor t{DType::Float32, std::move(dims), {}};
  require(t.element_count() == values.size(), "value count does not match dims");
  t.payload.resize(values.size_bytes());
  std::memcpy(t.payload.data(), values.data(), values.size_bytes());
  return t;
}

Tensor make_u8_tensor(std::vector<std::uint64_t> dims, std::span<const std::uint8_t> values) {
  Tensor t{DType::U8, std::move(dims), {}};
  require(t.element_count() == values.size(), "value count does not match dims");
  t.payload.resize(values.size());
  std::memcpy(t.payload.data(), values.data(), values.size());
  return t;
}

std::vector<cplx> complex_values(const Tensor& t) {
  require(t.dtype == DType::Complex64, "expected complex64 tensor");
  const std::size_t n = t.element_count();
  std::vector<cplx> out(n);
  const auto* in = reinterpret_cast<const float*>(t.payload.data());
  for (std::size_t i = 0; i < n; ++i) out[i] = cplx(in[2 * i], in[2 * i + 1]);
  return out;
}

std::vector<float> float_values(const Tensor& t) {
  require(t.dtype == DType::Float32, "expected float32 tensor");
  std::vector<float> out(t.element_count());
  std::memcpy(out.data(), t.payload.data(), t.payload.size());
  return out;
}

std::vector<std::uint8_t> u8_values(const Tensor& t) {
  require(t.dtype == DType::U8, "expected u8 tensor");
  std::vector<std::uint8_t> out(t.element_count());
  std::memcpy(out.data(), t.payload.data(), t.payload.size());
  return out;
}

Tensor grid_to_tensor(const ComplexGrid& g) {
  return make_complex_tensor({static_cast<std::uint64_t>(g.frames()),
                              static_cast<std::uint64_t>(g.rows()),
                              static_cast<std::uint64_t>(g.cols())},
                             g.data());
}

ComplexGrid grid_from_tensor(const Tensor& t, Domain domain) {
  require(t.dims.size() == 2 || t.dims.size() == 3, "image tensors must be 2D or 3D");
  const int frames = t.dims.size() == 3 ? static_cast<int>(t.dims[0]) : 1;
  const int rows = static_cast<int>(t.dims[t.dims.size() - 2]);
  const int cols = static_cast<int>(t.dims.back());
  return ComplexGrid(frames, rows, cols, complex_values(t), domain);
}

void save_grid(const std::filesystem::path& path, const ComplexGrid& g) {
  save_tensor(path, grid_to_tensor(g));
}

ComplexGrid load_grid(const std::filesystem::path& path) {
  return grid_from_tensor(load_tensor(path));
}

}  // namespace spamri
