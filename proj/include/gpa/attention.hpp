// Copyright 2026 The GPA Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gpa/config.hpp"
#include "gpa/errors.hpp"
#include "gpa/parallel.hpp"
#include "gpa/spatial.hpp"
#include "gpa/tensor.hpp"

namespace gpa {

template <Real T>
T logit_scale(std::size_t key_channels, bool scaled) {
  return scaled ? T(1) / std::sqrt(static_cast<T>(key_channels)) : T(1);
}

namespace detail {

/// out = V * softmax(K^T Q) using caller-provided affinity storage
/// (n_keys x n_queries).
template <Real T>
void attend(MatrixView<const T> q, MatrixView<const T> k, MatrixView<const T> v,
            MatrixView<T> affinity, MatrixView<T> out, bool scaled, std::size_t threads) {
  kernel::matmul_tn(k, q, affinity, threads);
  if (scaled) kernel::scale(affinity, logit_scale<T>(q.rows, true));
  kernel::softmax_columns(affinity, threads);
  kernel::matmul(v, MatrixView<const T>(affinity), out, threads);
}

template <Real T>
void check_attention_shapes(const ImageTensor<T>& q, const ImageTensor<T>& k,
                            const ImageTensor<T>& v) {
  if (q.channels() != k.channels()) {
    throw ShapeError("query has " + std::to_string(q.channels()) + " channels, key has " +
                     std::to_string(k.channels()));
  }
  if (k.height() != v.height() || k.width() != v.width()) {
    throw ShapeError("key shape " + to_string(k.shape()) + " and value shape " +
                     to_string(v.shape()) + " differ spatially");
  }
}

/// Copies the columns `flat` of `src` into `dst` (src.rows x flat.size()).
template <Real T>
void gather_columns(MatrixView<const T> src, std::span<const std::size_t> flat, MatrixView<T> dst) {
  for (std::size_t r = 0; r < src.rows; ++r) {
    for (std::size_t j = 0; j < flat.size(); ++j) dst(r, j) = src(r, flat[j]);
  }
}

}  // namespace detail

/// Dot-product attention V * softmax(K^T Q), normalized over keys. The output
/// has V's channels and Q's spatial shape.
template <Real T>
ImageTensor<T> full_attention(const ImageTensor<T>& q, const ImageTensor<T>& k,
                              const ImageTensor<T>& v, bool scaled = false) {
  detail::check_attention_shapes(q, k, v);
  Matrix<T> affinity(k.pixels(), q.pixels());
  ImageTensor<T> out(v.channels(), q.height(), q.width());
  detail::attend(q.as_matrix(), k.as_matrix(), v.as_matrix(), affinity.view(), out.as_matrix(),
                 scaled, thread_count());
  return out;
}

/// Greedy relevance: the kappa key rows of `affinity` with the largest sum
/// over the given query columns. Sorted by descending sum; ties go to the
/// lower key index, which makes the result prefix-nested in kappa.
template <Real T>
std::vector<std::size_t> relevant_keys(MatrixView<const T> affinity,
                                       std::span<const std::size_t> query_columns,
                                       std::size_t kappa) {
  if (kappa == 0) throw ConfigError("kappa must be positive");
  if (kappa > affinity.rows) {
    throw ConfigError("kappa (" + std::to_string(kappa) + ") exceeds the number of keys (" +
                      std::to_string(affinity.rows) + ")");
  }
  std::vector<T> score(affinity.rows, T(0));
  for (std::size_t i = 0; i < affinity.rows; ++i) {
    T acc = T(0);
    for (auto j : query_columns) acc += affinity(i, j);
    score[i] = acc;
  }
  std::vector<std::size_t> order(affinity.rows);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(kappa), order.end(),
                    [&](std::size_t a, std::size_t b) {
                      return score[a] != score[b] ? score[a] > score[b] : a < b;
                    });
  order.resize(kappa);
  return order;
}

/// Relevance over every column of an already-extracted cell affinity.
template <Real T>
std::vector<std::size_t> relevant_keys(const Matrix<T>& cell_affinity, std::size_t kappa) {
  std::vector<std::size_t> all(cell_affinity.cols());
  std::iota(all.begin(), all.end(), std::size_t{0});
  return relevant_keys(cell_affinity.view(), std::span<const std::size_t>(all), kappa);
}

/// Per-cell key selections at both resolutions, plus the query cells they
/// serve. Produced by the relevance pass and consumed by the sparse pass.
struct RelevantKeySets {
  std::size_t height = 0;  // full-resolution grid
  std::size_t width = 0;
  std::size_t d = 1;
  GridShape grid;
  std::size_t kappa = 0;

  std::vector<IndexStructure> query_cells_low;  // J'(l) on the h/d x w/d grid
  std::vector<IndexStructure> query_cells;      // J(l) on the h x w grid
  std::vector<IndexStructure> low_res;          // I'(l), kappa keys each
  std::vector<IndexStructure> high_res;         // I(l) = U_d(I'(l)), kappa*d^2 keys each

  std::size_t cells() const noexcept { return low_res.size(); }
  std::size_t dictionary_size() const noexcept { return kappa * d * d; }
  std::size_t low_height() const noexcept { return height / d; }
  std::size_t low_width() const noexcept { return width / d; }

  /// Cell containing the full-resolution query pixel.
  std::size_t cell_of(Coord query) const noexcept {
    const std::size_t ch = height / grid.rows;
    const std::size_t cw = width / grid.cols;
    return (query.row / ch) * grid.cols + query.col / cw;
  }
};

template <Real T>
struct GpaResult {
  ImageTensor<T> output;
  RelevantKeySets sets;
};

namespace detail {

template <Real T>
void check_gpa_shapes(const ImageTensor<T>& q, const ImageTensor<T>& k) {
  if (q.height() != k.height() || q.width() != k.width()) {
    throw ShapeError("grid partitioned attention needs equal query and key grids, got " +
                     to_string(q.shape()) + " and " + to_string(k.shape()));
  }
}

}  // namespace detail

/// Relevance pass: downsample Q and K, take full attention at low resolution,
/// then pick the kappa most relevant keys for each partition cell.
template <Real T>
RelevantKeySets find_relevant_keys(const ImageTensor<T>& q, const ImageTensor<T>& k,
                                   const GpaConfig& cfg) {
  if (q.channels() != k.channels()) {
    throw ShapeError("query has " + std::to_string(q.channels()) + " channels, key has " +
                     std::to_string(k.channels()));
  }
  detail::check_gpa_shapes(q, k);
  validate(cfg, q.height(), q.width());

  RelevantKeySets sets;
  sets.height = q.height();
  sets.width = q.width();
  sets.d = cfg.d;
  sets.grid = {cfg.m_h, cfg.m_w};
  sets.kappa = cfg.kappa;
  const std::size_t hl = sets.low_height();
  const std::size_t wl = sets.low_width();
  sets.query_cells_low = square_cell_indices(hl, wl, cfg.m_h, cfg.m_w);
  sets.query_cells = square_cell_indices(q.height(), q.width(), cfg.m_h, cfg.m_w);

  const std::size_t m = cfg.cells();
  sets.low_res.resize(m);
  sets.high_res.resize(m);
  {
    const ImageTensor<T> q_low = downsample(q, cfg.d);
    const ImageTensor<T> k_low = downsample(k, cfg.d);
    Matrix<T> affinity(k_low.pixels(), q_low.pixels());
    const std::size_t threads = thread_count();
    kernel::matmul_tn(k_low.as_matrix(), q_low.as_matrix(), affinity.view(), threads);
    if (cfg.scaled) kernel::scale(affinity.view(), logit_scale<T>(q.channels(), true));
    kernel::softmax_columns(affinity.view(), threads);

    parallel_for(
        m,
        [&](std::size_t l) {
          const auto columns = sets.query_cells_low[l].flat(wl);
          const auto keys =
              relevant_keys(MatrixView<const T>(affinity.view()),
                            std::span<const std::size_t>(columns), cfg.kappa);
          sets.low_res[l] = IndexStructure::from_flat(keys, wl);
          sets.high_res[l] = upsample_indices(sets.low_res[l], cfg.d);
        },
        threads);
  }
  return sets;
}

namespace detail {

template <Real T>
void check_sets(const RelevantKeySets& sets, const ImageTensor<T>& q, const ImageTensor<T>& k,
                const ImageTensor<T>& v) {
  check_attention_shapes(q, k, v);
  check_gpa_shapes(q, k);
  if (sets.height != q.height() || sets.width != q.width()) {
    throw ShapeError("relevant key sets were computed for a " + std::to_string(sets.height) + "x" +
                     std::to_string(sets.width) + " grid, inputs are " +
                     std::to_string(q.height()) + "x" + std::to_string(q.width()));
  }
  const std::size_t m = sets.grid.count();
  if (m == 0 || sets.low_res.size() != m || sets.high_res.size() != m ||
      sets.query_cells.size() != m) {
    throw ShapeError("relevant key sets do not match their partition grid");
  }
  for (const auto& keys : sets.high_res) {
    if (keys.size() != sets.dictionary_size()) {
      throw ShapeError("relevant key set has " + std::to_string(keys.size()) +
                       " keys, expected kappa*d^2 = " + std::to_string(sets.dictionary_size()));
    }
    for (const auto& c : keys.coords()) {
      if (c.row >= q.height() || c.col >= q.width()) throw ShapeError("key index outside the grid");
    }
  }
}

}  // namespace detail

/// Sparse pass with fixed selections: each query cell attends only to the
/// upsampled keys of its cell. All cells are evaluated as one batch, so the
/// gathered dictionaries and affinities of every cell are live together.
template <Real T>
ImageTensor<T> gpa_apply(const ImageTensor<T>& q, const ImageTensor<T>& k, const ImageTensor<T>& v,
                         const RelevantKeySets& sets, bool scaled = false) {
  detail::check_sets(sets, q, k, v);
  const std::size_t m = sets.cells();
  const std::size_t dict = sets.dictionary_size();
  const std::size_t ck = q.channels();
  const std::size_t cv = v.channels();

  const Partitioning<T> query_cells = partition_square(q, sets.grid.rows, sets.grid.cols);
  const std::size_t per_cell = query_cells.cell_shape.count();

  Matrix<T> keys(m * ck, dict);
  Matrix<T> values(m * cv, dict);
  Matrix<T> affinity(m * dict, per_cell);

  Partitioning<T> out_cells;
  out_cells.source_shape = {cv, q.height(), q.width()};
  out_cells.grid = query_cells.grid;
  out_cells.cell_shape = query_cells.cell_shape;
  out_cells.cells.reserve(m);
  for (std::size_t l = 0; l < m; ++l) {
    out_cells.cells.push_back(
        {ImageTensor<T>(cv, out_cells.cell_shape.rows, out_cells.cell_shape.cols),
         query_cells.cells[l].indices});
  }

  parallel_for(m, [&](std::size_t l) {
    const auto flat = sets.high_res[l].flat(q.width());
    MatrixView<T> cell_keys{keys.data().data() + l * ck * dict, ck, dict};
    MatrixView<T> cell_values{values.data().data() + l * cv * dict, cv, dict};
    MatrixView<T> cell_affinity{affinity.data().data() + l * dict * per_cell, dict, per_cell};
    detail::gather_columns(k.as_matrix(), std::span<const std::size_t>(flat), cell_keys);
    detail::gather_columns(v.as_matrix(), std::span<const std::size_t>(flat), cell_values);
    detail::attend<T>(query_cells.cells[l].tensor.as_matrix(), cell_keys, cell_values,
                      cell_affinity, out_cells.cells[l].tensor.as_matrix(), scaled, 1);
  });

  return compose(out_cells);
}

/// Grid partitioned attention: relevance pass followed by the sparse pass.
template <Real T>
GpaResult<T> gpa_forward(const ImageTensor<T>& q, const ImageTensor<T>& k, const ImageTensor<T>& v,
                         const GpaConfig& cfg) {
  detail::check_attention_shapes(q, k, v);
  RelevantKeySets sets = find_relevant_keys(q, k, cfg);
  ImageTensor<T> out = gpa_apply(q, k, v, sets, cfg.scaled);
  return {std::move(out), std::move(sets)};
}

/// Sparse-pass affinity of one cell (dictionary x cell queries), computed by
/// the same kernel gpa_apply uses.
template <Real T>
Matrix<T> cell_affinity(const ImageTensor<T>& q, const ImageTensor<T>& k,
                        const RelevantKeySets& sets, std::size_t cell, bool scaled = false) {
  if (cell >= sets.cells()) throw ShapeError("cell index out of range");
  detail::check_gpa_shapes(q, k);
  const std::size_t dict = sets.dictionary_size();
  const auto& cell_idx = sets.query_cells[cell];
  const std::size_t ch = sets.height / sets.grid.rows;
  const std::size_t cw = sets.width / sets.grid.cols;
  ImageTensor<T> q_cell(q.channels(), ch, cw);
  const Coord origin = cell_idx[0];
  for (std::size_t c = 0; c < q.channels(); ++c) {
    for (std::size_t r = 0; r < ch; ++r) {
      for (std::size_t col = 0; col < cw; ++col) q_cell(c, r, col) = q(c, origin.row + r, origin.col + col);
    }
  }
  Matrix<T> keys(k.channels(), dict);
  const auto flat = sets.high_res[cell].flat(q.width());
  detail::gather_columns(k.as_matrix(), std::span<const std::size_t>(flat), keys.view());
  Matrix<T> affinity(dict, q_cell.pixels());
  kernel::matmul_tn(MatrixView<const T>(keys.view()), q_cell.as_matrix(), affinity.view());
  if (scaled) kernel::scale(affinity.view(), logit_scale<T>(q.channels(), true));
  kernel::softmax_columns(affinity.view());
  return affinity;
}

enum class CopyMode { concat, residual };

/// 1x1 convolution: per-pixel linear map with weights (out_channels x in_channels).
template <Real T>
ImageTensor<T> project(const Matrix<T>& weights, const ImageTensor<T>& x) {
  if (weights.cols() != x.channels()) {
    throw ShapeError("projection expects " + std::to_string(weights.cols()) +
                     " input channels, tensor has " + std::to_string(x.channels()));
  }
  ImageTensor<T> out(weights.rows(), x.height(), x.width());
  kernel::matmul(weights.view(), x.as_matrix(), out.as_matrix());
  return out;
}

/// Attention copy block: queries come from the target, keys and values from
/// the source, each via its own 1x1 projection. Without a config the block
/// uses full attention.
template <Real T>
ImageTensor<T> copy_block(const ImageTensor<T>& source, const ImageTensor<T>& target,
                          const Matrix<T>& wq, const Matrix<T>& wk, const Matrix<T>& wv,
                          const std::optional<GpaConfig>& cfg, CopyMode mode) {
  if (wq.cols() != target.channels()) {
    throw ShapeError("Wq expects " + std::to_string(wq.cols()) + " target channels, target has " +
                     std::to_string(target.channels()));
  }
  if (wk.cols() != source.channels() || wv.cols() != source.channels()) {
    throw ShapeError("Wk/Wv must take the " + std::to_string(source.channels()) + " source channels");
  }
  if (wq.rows() != wk.rows()) {
    throw ShapeError("Wq and Wk must produce the same key channel count");
  }
  if (mode == CopyMode::residual && wv.rows() != target.channels()) {
    throw ShapeError("residual mode needs Wv to produce the " + std::to_string(target.channels()) +
                     " target channels");
  }

  const ImageTensor<T> q = project(wq, target);
  const ImageTensor<T> k = project(wk, source);
  const ImageTensor<T> v = project(wv, source);
  const ImageTensor<T> attended = cfg ? gpa_forward(q, k, v, *cfg).output : full_attention(q, k, v);

  if (mode == CopyMode::residual) {
    ImageTensor<T> out = target;
    auto dst = out.data();
    auto src = attended.data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
    return out;
  }
  ImageTensor<T> out(target.channels() + attended.channels(), target.height(), target.width());
  auto dst = out.data();
  std::copy(target.data().begin(), target.data().end(), dst.begin());
  std::copy(attended.data().begin(), attended.data().end(),
            dst.begin() + static_cast<std::ptrdiff_t>(target.size()));
  return out;
}

}  // namespace gpa
