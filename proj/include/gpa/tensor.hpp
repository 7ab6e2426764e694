// Copyright 2026 The GPA Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cassert>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

#include "gpa/errors.hpp"
#include "gpa/memory.hpp"
#include "gpa/parallel.hpp"

namespace gpa {

template <class T>
concept Real = std::same_as<T, float> || std::same_as<T, double>;

struct Shape3 {
  std::size_t c = 0;
  std::size_t h = 0;
  std::size_t w = 0;

  std::size_t pixels() const noexcept { return h * w; }
  std::size_t size() const noexcept { return c * h * w; }
  friend bool operator==(const Shape3&, const Shape3&) = default;
};

inline std::string to_string(const Shape3& s) {
  return std::to_string(s.c) + "x" + std::to_string(s.h) + "x" + std::to_string(s.w);
}

/// Non-owning row-major view. `T` may be const-qualified.
template <class T>
struct MatrixView {
  T* data = nullptr;
  std::size_t rows = 0;
  std::size_t cols = 0;

  T& operator()(std::size_t r, std::size_t c) const noexcept { return data[r * cols + c]; }
  std::span<T> row(std::size_t r) const noexcept { return {data + r * cols, cols}; }
  std::size_t size() const noexcept { return rows * cols; }

  operator MatrixView<const T>() const noexcept  // NOLINT
    requires(!std::is_const_v<T>)
  {
    return {data, rows, cols};
  }
};

template <Real T>
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, T fill = T(0))
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  static Matrix from_rows(std::size_t rows, std::size_t cols, std::span<const T> values) {
    if (values.size() != rows * cols) {
      throw ShapeError("matrix data length " + std::to_string(values.size()) +
                       " does not match " + std::to_string(rows) + "x" + std::to_string(cols));
    }
    Matrix m(rows, cols);
    std::copy(values.begin(), values.end(), m.data_.begin());
    return m;
  }

  static Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = T(1);
    return m;
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }

  T& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
  const T& operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

  std::span<T> data() noexcept { return data_; }
  std::span<const T> data() const noexcept { return data_; }

  MatrixView<T> view() noexcept { return {data_.data(), rows_, cols_}; }
  MatrixView<const T> view() const noexcept { return {data_.data(), rows_, cols_}; }

  friend bool operator==(const Matrix& a, const Matrix& b) {
    return a.rows_ == b.rows_ && a.cols_ == b.cols_ &&
           std::equal(a.data_.begin(), a.data_.end(), b.data_.begin());
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  TrackedBuffer<T> data_;
};

/// Dense channel x height x width tensor, row-major over (channel, row, col).
/// The channel-major layout makes the buffer a c x (h*w) matrix as-is.
template <Real T>
class ImageTensor {
 public:
  ImageTensor() = default;
  ImageTensor(std::size_t c, std::size_t h, std::size_t w, T fill = T(0))
      : shape_{c, h, w}, data_(c * h * w, fill) {
    if (c == 0 || h == 0 || w == 0) {
      throw ShapeError("image tensor dimensions must be positive, got " + to_string(shape_));
    }
  }
  explicit ImageTensor(const Shape3& s, T fill = T(0)) : ImageTensor(s.c, s.h, s.w, fill) {}

  /// Copies external data; rejects wrong lengths and non-finite values.
  static ImageTensor from_data(std::size_t c, std::size_t h, std::size_t w,
                               std::span<const T> values) {
    ImageTensor x(c, h, w);
    if (values.size() != x.size()) {
      throw ShapeError("tensor data length " + std::to_string(values.size()) +
                       " does not match shape " + to_string(x.shape()));
    }
    for (std::size_t i = 0; i < values.size(); ++i) {
      if (!std::isfinite(values[i])) {
        throw FormatError("non-finite tensor element at offset " + std::to_string(i));
      }
      x.data_[i] = values[i];
    }
    return x;
  }

  const Shape3& shape() const noexcept { return shape_; }
  std::size_t channels() const noexcept { return shape_.c; }
  std::size_t height() const noexcept { return shape_.h; }
  std::size_t width() const noexcept { return shape_.w; }
  std::size_t pixels() const noexcept { return shape_.pixels(); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  T& operator()(std::size_t ch, std::size_t r, std::size_t col) noexcept {
    return data_[(ch * shape_.h + r) * shape_.w + col];
  }
  const T& operator()(std::size_t ch, std::size_t r, std::size_t col) const noexcept {
    return data_[(ch * shape_.h + r) * shape_.w + col];
  }

  std::span<T> data() noexcept { return data_; }
  std::span<const T> data() const noexcept { return data_; }

  MatrixView<T> as_matrix() noexcept { return {data_.data(), shape_.c, pixels()}; }
  MatrixView<const T> as_matrix() const noexcept { return {data_.data(), shape_.c, pixels()}; }

  friend bool operator==(const ImageTensor& a, const ImageTensor& b) {
    return a.shape_ == b.shape_ && std::equal(a.data_.begin(), a.data_.end(), b.data_.begin());
  }

 private:
  Shape3 shape_{};
  TrackedBuffer<T> data_;
};

/// c x (h*w) matrix; column j is pixel (j / w, j % w).
template <Real T>
Matrix<T> flatten(const ImageTensor<T>& x) {
  return Matrix<T>::from_rows(x.channels(), x.pixels(), x.data());
}

template <Real T>
ImageTensor<T> unflatten(MatrixView<const T> m, std::size_t h, std::size_t w) {
  if (m.cols != h * w) {
    throw ShapeError("cannot unflatten " + std::to_string(m.cols) + " columns into " +
                     std::to_string(h) + "x" + std::to_string(w));
  }
  ImageTensor<T> x(m.rows, h, w);
  std::copy(m.data, m.data + m.size(), x.data().begin());
  return x;
}

template <Real T>
ImageTensor<T> unflatten(const Matrix<T>& m, std::size_t h, std::size_t w) {
  return unflatten(m.view(), h, w);
}

namespace kernel {

// Inputs are non-deduced so mutable views convert implicitly.
template <Real T>
using ConstView = std::type_identity_t<MatrixView<const T>>;

// All kernels accumulate each output element over the inner index in
// increasing order starting from zero, so they agree bitwise with a plain
// scalar loop (with floating-point contraction disabled).

/// out = a * b, parallel over output rows.
template <Real T>
void matmul(ConstView<T> a, ConstView<T> b, MatrixView<T> out,
            std::size_t threads = 1) {
  assert(a.cols == b.rows && out.rows == a.rows && out.cols == b.cols);
  parallel_for(
      a.rows,
      [&](std::size_t i) {
        auto dst = out.row(i);
        std::fill(dst.begin(), dst.end(), T(0));
        for (std::size_t k = 0; k < a.cols; ++k) {
          const T aik = a(i, k);
          const T* src = b.data + k * b.cols;
          for (std::size_t j = 0; j < b.cols; ++j) dst[j] += aik * src[j];
        }
      },
      threads);
}

/// out = a^T * b, for a (k x m) and b (k x n). This is the K^T Q product.
template <Real T>
void matmul_tn(ConstView<T> a, ConstView<T> b, MatrixView<T> out,
               std::size_t threads = 1) {
  assert(a.rows == b.rows && out.rows == a.cols && out.cols == b.cols);
  parallel_for(
      a.cols,
      [&](std::size_t i) {
        auto dst = out.row(i);
        std::fill(dst.begin(), dst.end(), T(0));
        for (std::size_t k = 0; k < a.rows; ++k) {
          const T aki = a(k, i);
          const T* src = b.data + k * b.cols;
          for (std::size_t j = 0; j < b.cols; ++j) dst[j] += aki * src[j];
        }
      },
      threads);
}

/// out = a * b^T, for a (m x k) and b (n x k).
template <Real T>
void matmul_nt(ConstView<T> a, ConstView<T> b, MatrixView<T> out,
               std::size_t threads = 1) {
  assert(a.cols == b.cols && out.rows == a.rows && out.cols == b.rows);
  parallel_for(
      a.rows,
      [&](std::size_t i) {
        for (std::size_t j = 0; j < b.rows; ++j) {
          T acc = T(0);
          for (std::size_t k = 0; k < a.cols; ++k) acc += a(i, k) * b(j, k);
          out(i, j) = acc;
        }
      },
      threads);
}

/// In-place softmax over rows (keys) for every column (query). Columns are
/// independent, so chunks of columns are processed in parallel.
template <Real T>
void softmax_columns(MatrixView<T> s, std::size_t threads = 1) {
  if (s.rows == 0 || s.cols == 0) return;
  constexpr std::size_t kBlock = 256;
  const std::size_t blocks = (s.cols + kBlock - 1) / kBlock;
  parallel_for(
      blocks,
      [&](std::size_t blk) {
        const std::size_t j0 = blk * kBlock;
        const std::size_t j1 = std::min(s.cols, j0 + kBlock);
        const std::size_t width = j1 - j0;
        std::vector<T> peak(width), total(width, T(0));
        for (std::size_t j = 0; j < width; ++j) peak[j] = s(0, j0 + j);
        for (std::size_t i = 1; i < s.rows; ++i) {
          for (std::size_t j = 0; j < width; ++j) peak[j] = std::max(peak[j], s(i, j0 + j));
        }
        for (std::size_t i = 0; i < s.rows; ++i) {
          for (std::size_t j = 0; j < width; ++j) {
            T& v = s(i, j0 + j);
            v = std::exp(v - peak[j]);
            total[j] += v;
          }
        }
        for (std::size_t i = 0; i < s.rows; ++i) {
          for (std::size_t j = 0; j < width; ++j) s(i, j0 + j) /= total[j];
        }
      },
      threads);
}

template <Real T>
void scale(MatrixView<T> m, T factor) {
  for (std::size_t i = 0; i < m.size(); ++i) m.data[i] *= factor;
}

}  // namespace kernel

template <Real T>
Matrix<T> matmul(const Matrix<T>& a, const Matrix<T>& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul dimension mismatch: " + std::to_string(a.rows()) + "x" +
                     std::to_string(a.cols()) + " * " + std::to_string(b.rows()) + "x" +
                     std::to_string(b.cols()));
  }
  Matrix<T> out(a.rows(), b.cols());
  kernel::matmul(a.view(), b.view(), out.view());
  return out;
}

/// Column-wise softmax of an n_keys x n_queries score matrix.
template <Real T>
Matrix<T> softmax_over_keys(const Matrix<T>& s) {
  Matrix<T> out = s;
  kernel::softmax_columns(out.view());
  return out;
}

}  // namespace gpa
