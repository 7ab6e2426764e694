// Copyright 2026 The GPA Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Binary tensor files:
//   "GPAT" | u8 version (1) | u8 dtype (0 = f32, 1 = f64) | u8 rank |
//   rank x u64 dims (little-endian) | elements, little-endian, row-major.

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <fstream>
#include <istream>
#include <iterator>
#include <ostream>
#include <string>
#include <vector>

#include "gpa/errors.hpp"
#include "gpa/tensor.hpp"

namespace gpa::io {

inline constexpr std::array<char, 4> kMagic{'G', 'P', 'A', 'T'};
inline constexpr std::uint8_t kVersion = 1;
// Headers claiming more elements than this are rejected before allocating.
inline constexpr std::uint64_t kMaxElements = std::uint64_t{1} << 32;

enum class DType : std::uint8_t { f32 = 0, f64 = 1 };

template <Real T>
constexpr DType dtype_of() {
  return std::same_as<T, float> ? DType::f32 : DType::f64;
}

inline std::size_t dtype_size(DType t) { return t == DType::f32 ? 4 : 8; }

/// Decoded file contents before conversion to a typed container.
struct RawTensor {
  DType dtype = DType::f64;
  std::vector<std::uint64_t> dims;
  std::vector<double> values;  // f32 values widen exactly

  std::size_t element_count() const {
    std::size_t n = 1;
    for (auto d : dims) n *= static_cast<std::size_t>(d);
    return n;
  }
};

namespace detail {

template <class U>
void put_le(std::ostream& os, U value) {
  std::array<char, sizeof(U)> bytes{};
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    bytes[i] = static_cast<char>((value >> (8 * i)) & 0xFF);
  }
  os.write(bytes.data(), bytes.size());
}

template <class U>
U get_le(std::istream& is) {
  std::array<unsigned char, sizeof(U)> bytes{};
  is.read(reinterpret_cast<char*>(bytes.data()), bytes.size());
  if (!is) throw FormatError("truncated tensor file");
  U value = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) value |= static_cast<U>(bytes[i]) << (8 * i);
  return value;
}

template <Real T>
void put_elements(std::ostream& os, std::span<const T> values) {
  using Bits = std::conditional_t<std::same_as<T, float>, std::uint32_t, std::uint64_t>;
  for (T v : values) put_le<Bits>(os, std::bit_cast<Bits>(v));
}

inline void write_header(std::ostream& os, DType dtype, std::span<const std::uint64_t> dims) {
  os.write(kMagic.data(), kMagic.size());
  put_le<std::uint8_t>(os, kVersion);
  put_le<std::uint8_t>(os, static_cast<std::uint8_t>(dtype));
  put_le<std::uint8_t>(os, static_cast<std::uint8_t>(dims.size()));
  for (auto d : dims) put_le<std::uint64_t>(os, d);
}

}  // namespace detail

template <Real T>
void write_tensor(std::ostream& os, const ImageTensor<T>& x) {
  const std::array<std::uint64_t, 3> dims{x.channels(), x.height(), x.width()};
  detail::write_header(os, dtype_of<T>(), dims);
  detail::put_elements<T>(os, x.data());
  if (!os) throw FormatError("failed writing tensor stream");
}

template <Real T>
void write_matrix(std::ostream& os, const Matrix<T>& m) {
  const std::array<std::uint64_t, 2> dims{m.rows(), m.cols()};
  detail::write_header(os, dtype_of<T>(), dims);
  detail::put_elements<T>(os, m.data());
  if (!os) throw FormatError("failed writing tensor stream");
}

inline RawTensor read_raw(std::istream& is) {
  std::array<char, 4> magic{};
  is.read(magic.data(), magic.size());
  if (!is || magic != kMagic) throw FormatError("bad magic: not a GPAT tensor file");
  const auto version = detail::get_le<std::uint8_t>(is);
  if (version != kVersion) {
    throw FormatError("unsupported tensor file version " + std::to_string(version));
  }
  const auto code = detail::get_le<std::uint8_t>(is);
  if (code > 1) throw FormatError("unknown dtype code " + std::to_string(code));
  RawTensor raw;
  raw.dtype = static_cast<DType>(code);
  const auto rank = detail::get_le<std::uint8_t>(is);
  raw.dims.resize(rank);
  std::uint64_t count = 1;
  for (auto& d : raw.dims) {
    d = detail::get_le<std::uint64_t>(is);
    if (d != 0 && count > kMaxElements / d) throw FormatError("tensor header claims too many elements");
    count *= d;
  }

  const std::size_t n = raw.element_count();
  // Grow while reading so a truncated file fails before a huge allocation.
  raw.values.reserve(std::min<std::size_t>(n, std::size_t{1} << 20));
  for (std::size_t i = 0; i < n; ++i) {
    if (raw.dtype == DType::f32) {
      raw.values.push_back(std::bit_cast<float>(detail::get_le<std::uint32_t>(is)));
    } else {
      raw.values.push_back(std::bit_cast<double>(detail::get_le<std::uint64_t>(is)));
    }
  }
  if (is.peek() != std::char_traits<char>::eof()) {
    throw FormatError("trailing bytes after tensor data");
  }
  return raw;
}

template <Real T>
ImageTensor<T> to_image_tensor(const RawTensor& raw) {
  if (raw.dims.size() != 3) {
    throw FormatError("expected a rank-3 tensor, file has rank " + std::to_string(raw.dims.size()));
  }
  std::vector<T> values(raw.values.begin(), raw.values.end());
  return ImageTensor<T>::from_data(raw.dims[0], raw.dims[1], raw.dims[2], values);
}

template <Real T>
Matrix<T> to_matrix(const RawTensor& raw) {
  if (raw.dims.size() != 2) {
    throw FormatError("expected a rank-2 tensor, file has rank " + std::to_string(raw.dims.size()));
  }
  std::vector<T> values(raw.values.begin(), raw.values.end());
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) throw FormatError("non-finite matrix element");
  }
  return Matrix<T>::from_rows(raw.dims[0], raw.dims[1], values);
}

template <Real T>
void save_tensor(const std::string& path, const ImageTensor<T>& x) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw FormatError("cannot open '" + path + "' for writing");
  write_tensor(os, x);
}

inline RawTensor load_raw(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open '" + path + "' for reading");
  return read_raw(is);
}

template <Real T>
ImageTensor<T> load_tensor(const std::string& path) {
  return to_image_tensor<T>(load_raw(path));
}

}  // namespace gpa::io
