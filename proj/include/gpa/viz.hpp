// Copyright 2026 The GPA Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Per-query affinity export for drawing query-to-key lines with alpha
// proportional to the weight.

#include <algorithm>
#include <cstddef>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <vector>

#include <json.hpp>

#include "gpa/attention.hpp"

namespace gpa::viz {

struct KeyWeight {
  Coord key;
  double weight = 0.0;
};

struct VizRecord {
  Coord query;
  std::size_t cell = 0;
  std::size_t dictionary_size = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t d = 1;
  std::vector<KeyWeight> keys;  // descending weight
};

/// Top `top_n` sparse-pass weights for each requested query, read from the
/// affinity of the query's cell.
template <Real T>
std::vector<VizRecord> extract(const ImageTensor<T>& q, const ImageTensor<T>& k,
                               const RelevantKeySets& sets, const std::vector<Coord>& positions,
                               std::size_t top_n, bool scaled = false) {
  for (const auto& p : positions) {
    if (p.row >= q.height() || p.col >= q.width()) {
      throw ShapeError("query position (" + std::to_string(p.row) + "," + std::to_string(p.col) +
                       ") is outside the " + std::to_string(q.height()) + "x" +
                       std::to_string(q.width()) + " grid");
    }
  }
  const std::size_t cell_w = sets.width / sets.grid.cols;

  std::vector<VizRecord> records;
  records.reserve(positions.size());
  for (const auto& p : positions) {
    VizRecord rec;
    rec.query = p;
    rec.cell = sets.cell_of(p);
    rec.dictionary_size = sets.dictionary_size();
    rec.height = sets.height;
    rec.width = sets.width;
    rec.d = sets.d;

    const Matrix<T> a = cell_affinity(q, k, sets, rec.cell, scaled);
    const Coord origin = sets.query_cells[rec.cell][0];
    const std::size_t column = (p.row - origin.row) * cell_w + (p.col - origin.col);

    const auto& dict = sets.high_res[rec.cell];
    std::vector<std::size_t> order(dict.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
      if (a(x, column) != a(y, column)) return a(x, column) > a(y, column);
      return dict[x] < dict[y];
    });
    order.resize(std::min(top_n, order.size()));
    for (auto i : order) rec.keys.push_back({dict[i], static_cast<double>(a(i, column))});
    records.push_back(std::move(rec));
  }
  return records;
}

inline nlohmann::json to_json(const std::vector<VizRecord>& records) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& r : records) {
    nlohmann::json keys = nlohmann::json::array();
    for (const auto& kw : r.keys) {
      keys.push_back({{"row", kw.key.row}, {"col", kw.key.col}, {"weight", kw.weight}});
    }
    out.push_back({{"query", {{"row", r.query.row}, {"col", r.query.col}}},
                   {"cell", r.cell},
                   {"dictionary_size", r.dictionary_size},
                   {"resolution", {{"height", r.height}, {"width", r.width}, {"d", r.d}}},
                   {"keys", keys}});
  }
  return out;
}

inline void write_csv(std::ostream& os, const std::vector<VizRecord>& records) {
  os << "query_row,query_col,cell,rank,key_row,key_col,weight\n";
  std::ostringstream num;
  for (const auto& r : records) {
    for (std::size_t i = 0; i < r.keys.size(); ++i) {
      num.str({});
      num << std::setprecision(17) << r.keys[i].weight;
      os << r.query.row << ',' << r.query.col << ',' << r.cell << ',' << i << ','
         << r.keys[i].key.row << ',' << r.keys[i].key.col << ',' << num.str() << '\n';
    }
  }
}

}  // namespace gpa::viz
