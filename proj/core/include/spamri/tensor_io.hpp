#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <vector>

#include "spamri/grid.hpp"

namespace spamri {

/// On-disk tensor container "CXG1":
///   magic 'C' 'X' 'G' '1' | u8 dtype | u8 ndim | ndim x u64 dims | payload
/// All integers and payload scalars are little-endian; payload is row-major.
enum class DType : std::uint8_t { Complex64 = 0, Float32 = 1, U8 = 2 };

std::size_t dtype_size(DType t);

struct Tensor {
  DType dtype = DType::Float32;
  std::vector<std::uint64_t> dims;
  std::vector<std::byte> payload;

  std::size_t element_count() const;
};

void write_tensor(std::ostream& os, const Tensor& t);
Tensor read_tensor(std::istream& is);

void save_tensor(const std::filesystem::path& path, const Tensor& t);
Tensor load_tensor(const std::filesystem::path& path);

Tensor make_complex_tensor(std::vector<std::uint64_t> dims, std::span<const cplx> values);
Tensor make_float_tensor(std::vector<std::uint64_t> dims, std::span<const float> values);
Tensor make_u8_tensor(std::vector<std::uint64_t> dims, std::span<const std::uint8_t> values);

std::vector<cplx> complex_values(const Tensor& t);
std::vector<float> float_values(const Tensor& t);
std::vector<std::uint8_t> u8_values(const Tensor& t);

/// Images are stored as complex64 with dims (frames, rows, cols); a 2D tensor
/// loads as a single frame.
Tensor grid_to_tensor(const ComplexGrid& g);
ComplexGrid grid_from_tensor(const Tensor& t, Domain domain = Domain::Image);

void save_grid(const std::filesystem::path& path, const ComplexGrid& g);
ComplexGrid load_grid(const std::filesystem::path& path);

namespace detail {
void write_dims(std::ostream& os, const std::vector<std::uint64_t>& dims);
std::vector<std::uint64_t> read_dims(std::istream& is);
void write_le_u16(std::ostream& os, std::uint16_t v);
std::uint16_t read_le_u16(std::istream& is);
void write_f32_payload(std::ostream& os, std::span<const float> values);
std::vector<float> read_f32_payload(std::istream& is, std::size_t count);
}  // namespace detail

}  // namespace spamri
