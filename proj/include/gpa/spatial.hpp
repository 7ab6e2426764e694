// Copyright 2026 The GPA Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <compare>
#include <cstddef>
#include <functional>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "gpa/errors.hpp"
#include "gpa/tensor.hpp"

namespace gpa {

struct Coord {
  std::size_t row = 0;
  std::size_t col = 0;
  friend auto operator<=>(const Coord&, const Coord&) = default;
};

struct GridShape {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t count() const noexcept { return rows * cols; }
  friend bool operator==(const GridShape&, const GridShape&) = default;
};

/// Ordered, duplicate-free set of pixel coordinates. When the coordinates
/// form a dense rectangle listed in scan-line order, grid_shape() reports it.
class IndexStructure {
 public:
  IndexStructure() = default;

  static IndexStructure from_coords(std::vector<Coord> coords) {
    std::set<Coord> seen;
    for (const auto& c : coords) {
      if (!seen.insert(c).second) {
        throw ShapeError("duplicate coordinate (" + std::to_string(c.row) + "," +
                         std::to_string(c.col) + ") in index structure");
      }
    }
    IndexStructure s;
    s.coords_ = std::move(coords);
    return s;
  }

  /// Dense block of rows x cols starting at `origin`, scan-line order.
  static IndexStructure block(Coord origin, GridShape shape) {
    IndexStructure s;
    s.coords_.reserve(shape.count());
    for (std::size_t r = 0; r < shape.rows; ++r) {
      for (std::size_t c = 0; c < shape.cols; ++c) {
        s.coords_.push_back({origin.row + r, origin.col + c});
      }
    }
    s.grid_ = shape;
    return s;
  }

  /// Full index set of an h x w image.
  static IndexStructure full(std::size_t h, std::size_t w) { return block({0, 0}, {h, w}); }

  /// Coordinates for flat scan-line indices on a grid of the given width.
  static IndexStructure from_flat(const std::vector<std::size_t>& flat, std::size_t width) {
    std::vector<Coord> coords;
    coords.reserve(flat.size());
    for (auto f : flat) coords.push_back({f / width, f % width});
    return from_coords(std::move(coords));
  }

  const std::vector<Coord>& coords() const noexcept { return coords_; }
  const std::optional<GridShape>& grid_shape() const noexcept { return grid_; }
  std::size_t size() const noexcept { return coords_.size(); }
  const Coord& operator[](std::size_t i) const noexcept { return coords_[i]; }

  std::vector<std::size_t> flat(std::size_t width) const {
    std::vector<std::size_t> out;
    out.reserve(coords_.size());
    for (const auto& c : coords_) out.push_back(c.row * width + c.col);
    return out;
  }

  std::set<Coord> as_set() const { return {coords_.begin(), coords_.end()}; }

  bool same_set(const IndexStructure& other) const {
    return size() == other.size() && as_set() == other.as_set();
  }

  friend bool operator==(const IndexStructure& a, const IndexStructure& b) {
    return a.coords_ == b.coords_;
  }

 private:
  std::vector<Coord> coords_;
  std::optional<GridShape> grid_;
};

/// Channel-wise mean over non-overlapping d x d blocks.
template <Real T>
ImageTensor<T> downsample(const ImageTensor<T>& x, std::size_t d) {
  if (d == 0) throw DivisibilityError("downsampling factor must be positive");
  detail::require_divisible(x.height(), d, "height");
  detail::require_divisible(x.width(), d, "width");
  const std::size_t h2 = x.height() / d;
  const std::size_t w2 = x.width() / d;
  ImageTensor<T> out(x.channels(), h2, w2);
  const T count = static_cast<T>(d * d);
  for (std::size_t ch = 0; ch < x.channels(); ++ch) {
    for (std::size_t i = 0; i < h2; ++i) {
      for (std::size_t j = 0; j < w2; ++j) {
        T sum = T(0);
        for (std::size_t dh = 0; dh < d; ++dh) {
          for (std::size_t dw = 0; dw < d; ++dw) sum += x(ch, d * i + dh, d * j + dw);
        }
        out(ch, i, j) = sum / count;
      }
    }
  }
  return out;
}

/// Each input coordinate expands to its d x d block; input order is outer,
/// block offsets are inner in scan-line order.
inline IndexStructure upsample_indices(const IndexStructure& low, std::size_t d) {
  if (d == 0) throw DivisibilityError("upsampling factor must be positive");
  if (d == 1) return low;
  if (low.size() == 1) return IndexStructure::block({low[0].row * d, low[0].col * d}, {d, d});
  std::vector<Coord> coords;
  coords.reserve(low.size() * d * d);
  for (const auto& c : low.coords()) {
    for (std::size_t dh = 0; dh < d; ++dh) {
      for (std::size_t dw = 0; dw < d; ++dw) coords.push_back({c.row * d + dh, c.col * d + dw});
    }
  }
  // Distinct inputs map to disjoint blocks; from_coords asserts it.
  return IndexStructure::from_coords(std::move(coords));
}

template <Real T>
struct PartitionCell {
  ImageTensor<T> tensor;
  IndexStructure indices;
};

template <Real T>
struct Partitioning {
  std::vector<PartitionCell<T>> cells;
  Shape3 source_shape;
  GridShape grid;        // cell arrangement (m_h, m_w)
  GridShape cell_shape;  // pixels per cell
};

/// Index sets of an m_h x m_w square partitioning of an h x w grid,
/// cells in scan-line order over the cell grid.
inline std::vector<IndexStructure> square_cell_indices(std::size_t h, std::size_t w,
                                                       std::size_t m_h, std::size_t m_w) {
  detail::require_divisible(h, m_h, "height");
  detail::require_divisible(w, m_w, "width");
  const GridShape cell{h / m_h, w / m_w};
  std::vector<IndexStructure> cells;
  cells.reserve(m_h * m_w);
  for (std::size_t a = 0; a < m_h; ++a) {
    for (std::size_t b = 0; b < m_w; ++b) {
      cells.push_back(IndexStructure::block({a * cell.rows, b * cell.cols}, cell));
    }
  }
  return cells;
}

template <Real T>
Partitioning<T> partition_square(const ImageTensor<T>& x, std::size_t m_h, std::size_t m_w) {
  if (m_h == 0 || m_w == 0) throw DivisibilityError("partition grid must be positive");
  auto indices = square_cell_indices(x.height(), x.width(), m_h, m_w);
  Partitioning<T> p;
  p.source_shape = x.shape();
  p.grid = {m_h, m_w};
  p.cell_shape = {x.height() / m_h, x.width() / m_w};
  p.cells.reserve(indices.size());
  for (auto& idx : indices) {
    ImageTensor<T> cell(x.channels(), p.cell_shape.rows, p.cell_shape.cols);
    const Coord origin = idx[0];
    for (std::size_t ch = 0; ch < x.channels(); ++ch) {
      for (std::size_t r = 0; r < p.cell_shape.rows; ++r) {
        for (std::size_t c = 0; c < p.cell_shape.cols; ++c) {
          cell(ch, r, c) = x(ch, origin.row + r, origin.col + c);
        }
      }
    }
    p.cells.push_back({std::move(cell), std::move(idx)});
  }
  return p;
}

/// Scatters every cell back through its indices. Cell order is irrelevant;
/// element k of a cell tensor (scan-line) belongs at indices[k].
template <Real T>
ImageTensor<T> compose(const Partitioning<T>& p) {
  const Shape3& s = p.source_shape;
  if (p.cells.size() != p.grid.count()) {
    throw ShapeError("partitioning has " + std::to_string(p.cells.size()) +
                     " cells, grid expects " + std::to_string(p.grid.count()));
  }
  if (p.cell_shape.rows * p.grid.rows != s.h || p.cell_shape.cols * p.grid.cols != s.w) {
    throw ShapeError("cell grid does not tile the source shape " + to_string(s));
  }
  ImageTensor<T> out(s);
  std::vector<bool> covered(s.pixels(), false);
  for (const auto& cell : p.cells) {
    if (cell.tensor.channels() != s.c || cell.tensor.height() != p.cell_shape.rows ||
        cell.tensor.width() != p.cell_shape.cols) {
      throw ShapeError("inconsistent cell tensor shape " + to_string(cell.tensor.shape()));
    }
    if (cell.indices.size() != cell.tensor.pixels()) {
      throw ShapeError("cell index count does not match its tensor");
    }
    const std::size_t cw = cell.tensor.width();
    for (std::size_t k = 0; k < cell.indices.size(); ++k) {
      const Coord& c = cell.indices[k];
      if (c.row >= s.h || c.col >= s.w) throw ShapeError("cell index outside source shape");
      const std::size_t flat = c.row * s.w + c.col;
      if (covered[flat]) throw ShapeError("overlapping cell indices");
      covered[flat] = true;
      for (std::size_t ch = 0; ch < s.c; ++ch) out(ch, c.row, c.col) = cell.tensor(ch, k / cw, k % cw);
    }
  }
  if (!std::all_of(covered.begin(), covered.end(), [](bool b) { return b; })) {
    throw ShapeError("cells do not cover the source index set");
  }
  return out;
}

/// Maps an (h, w) grid to the index sets of its cells.
using Partitioner = std::function<std::vector<IndexStructure>(std::size_t h, std::size_t w)>;

/// True iff upsampling every low-resolution cell by d yields exactly the
/// matching cell of the d-times larger grid.
inline bool check_consistency(std::size_t d, GridShape shape_low, const Partitioner& partition) {
  if (d == 0) return false;
  std::vector<IndexStructure> low, high;
  try {
    low = partition(shape_low.rows, shape_low.cols);
    high = partition(shape_low.rows * d, shape_low.cols * d);
  } catch (const DivisibilityError&) {
    return false;
  }
  if (low.size() != high.size()) return false;
  for (std::size_t l = 0; l < low.size(); ++l) {
    if (!upsample_indices(low[l], d).same_set(high[l])) return false;
  }
  return true;
}

inline bool check_consistency(std::size_t d, std::size_t m_h, std::size_t m_w,
                              GridShape shape_low) {
  if (m_h == 0 || m_w == 0) return false;
  return check_consistency(d, shape_low, [m_h, m_w](std::size_t h, std::size_t w) {
    return square_cell_indices(h, w, m_h, m_w);
  });
}

}  // namespace gpa
