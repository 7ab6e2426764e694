// Copyright 2026 The GPA Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>
#include <set>
#include <vector>

#include "gpa/random.hpp"
#include "gpa/spatial.hpp"
#include "oracle.hpp"

namespace gpa {
namespace {

TEST(Downsample, ConstantStaysConstant) {
  for (std::size_t d : {1u, 2u, 3u, 6u}) {
    const ImageTensor<double> x(2, 6, 12, 1.75);
    const auto y = downsample(x, d);
    EXPECT_EQ(y.height(), 6 / d);
    EXPECT_EQ(y.width(), 12 / d);
    for (double v : y.data()) EXPECT_EQ(v, 1.75);
  }
}

TEST(Downsample, BlockMean) {
  const std::vector<double> v{1, 3, 5, 7};
  const auto y = downsample(ImageTensor<double>::from_data(1, 2, 2, v), 2);
  ASSERT_EQ(y.size(), 1u);
  EXPECT_EQ(y(0, 0, 0), 4.0);
}

TEST(Downsample, MatchesDoubleLoopOracle) {
  Rng rng(21);
  const auto x = random_tensor<double>(1, 8, 8, rng);
  for (std::size_t d : {2u, 4u}) EXPECT_EQ(downsample(x, d), oracle::block_mean(x, d));
}

TEST(Downsample, RejectsNonDivisibleShape) {
  EXPECT_THROW(downsample(ImageTensor<double>(1, 7, 8), 2), DivisibilityError);
  EXPECT_THROW(downsample(ImageTensor<double>(1, 8, 6), 4), DivisibilityError);
  EXPECT_THROW(downsample(ImageTensor<double>(1, 8, 8), 0), DivisibilityError);
}

TEST(Downsample, PixelsAverageTheirUpsampledIndices) {
  Rng rng(22);
  const auto x = random_tensor<double>(3, 12, 6, rng);
  const std::size_t d = 3;
  const auto y = downsample(x, d);
  for (std::size_t ch = 0; ch < 3; ++ch) {
    for (std::size_t i = 0; i < y.height(); ++i) {
      for (std::size_t j = 0; j < y.width(); ++j) {
        const auto up = upsample_indices(IndexStructure::from_coords({{i, j}}), d);
        double s = 0.0;
        for (const auto& c : up.coords()) s += x(ch, c.row, c.col);
        EXPECT_EQ(y(ch, i, j), s / 9.0);
      }
    }
  }
}

TEST(UpsampleIndices, SinglePixelBecomesBlock) {
  const auto up = upsample_indices(IndexStructure::from_coords({{0, 0}}), 2);
  const std::vector<Coord> expected{{0, 0}, {0, 1}, {1, 0}, {1, 1}};
  EXPECT_EQ(up.coords(), expected);
}

TEST(UpsampleIndices, FactorOneIsIdentity) {
  const auto low = IndexStructure::from_coords({{3, 1}, {0, 2}, {5, 5}});
  EXPECT_EQ(upsample_indices(low, 1), low);
}

TEST(UpsampleIndices, FactorThreeSpansBlock) {
  const auto up = upsample_indices(IndexStructure::from_coords({{1, 2}}), 3);
  ASSERT_EQ(up.size(), 9u);
  std::vector<Coord> expected;
  for (std::size_t r = 3; r <= 5; ++r) {
    for (std::size_t c = 6; c <= 8; ++c) expected.push_back({r, c});
  }
  EXPECT_EQ(up.coords(), expected);
}

TEST(UpsampleIndices, InputOrderIsOuter) {
  const auto up = upsample_indices(IndexStructure::from_coords({{1, 1}, {0, 0}}), 2);
  const std::vector<Coord> expected{{2, 2}, {2, 3}, {3, 2}, {3, 3}, {0, 0}, {0, 1}, {1, 0}, {1, 1}};
  EXPECT_EQ(up.coords(), expected);
}

TEST(UpsampleIndices, CardinalityAndDistinctness) {
  Rng rng(23);
  for (int trial = 0; trial < 30; ++trial) {
    std::set<Coord> pick;
    const std::size_t n = rng.between(1, 12);
    while (pick.size() < n) pick.insert({rng.between(0, 7), rng.between(0, 7)});
    const auto low = IndexStructure::from_coords({pick.begin(), pick.end()});
    const std::size_t d = rng.between(1, 4);
    const auto up = upsample_indices(low, d);
    EXPECT_EQ(up.size(), n * d * d);
    EXPECT_EQ(up.as_set().size(), up.size());
  }
}

TEST(IndexStructure, RejectsDuplicates) {
  EXPECT_THROW(IndexStructure::from_coords({{1, 1}, {0, 0}, {1, 1}}), ShapeError);
}

TEST(PartitionSquare, SingleCellIsWholeTensor) {
  Rng rng(24);
  const auto x = random_tensor<double>(2, 4, 6, rng);
  const auto p = partition_square(x, 1, 1);
  ASSERT_EQ(p.cells.size(), 1u);
  EXPECT_EQ(p.cells[0].tensor, x);
  EXPECT_EQ(p.cells[0].indices, IndexStructure::full(4, 6));
}

TEST(PartitionSquare, FourQuadrants) {
  std::vector<double> v(16);
  for (std::size_t i = 0; i < 16; ++i) v[i] = static_cast<double>(i);
  const auto p = partition_square(ImageTensor<double>::from_data(1, 4, 4, v), 2, 2);
  ASSERT_EQ(p.cells.size(), 4u);
  const auto& c0 = p.cells[0];
  EXPECT_EQ(c0.tensor.height(), 2u);
  EXPECT_EQ(c0.tensor.width(), 2u);
  EXPECT_EQ(c0.tensor(0, 0, 0), 0);
  EXPECT_EQ(c0.tensor(0, 0, 1), 1);
  EXPECT_EQ(c0.tensor(0, 1, 0), 4);
  EXPECT_EQ(c0.tensor(0, 1, 1), 5);
  EXPECT_EQ(c0.indices, IndexStructure::block({0, 0}, {2, 2}));
  EXPECT_EQ(p.cells[1].indices[0], (Coord{0, 2}));
  EXPECT_EQ(p.cells[2].indices[0], (Coord{2, 0}));
  EXPECT_EQ(p.cells[3].tensor(0, 1, 1), 15);
}

TEST(PartitionSquare, CellsAreDisjointAndCover) {
  Rng rng(25);
  const auto x = random_tensor<double>(2, 6, 4, rng);
  const auto p = partition_square(x, 3, 2);
  ASSERT_EQ(p.cells.size(), 6u);
  std::set<Coord> seen;
  std::size_t total = 0;
  for (const auto& cell : p.cells) {
    total += cell.indices.size();
    for (std::size_t k = 0; k < cell.indices.size(); ++k) {
      const Coord c = cell.indices[k];
      seen.insert(c);
      for (std::size_t ch = 0; ch < 2; ++ch) {
        EXPECT_EQ(cell.tensor(ch, k / cell.tensor.width(), k % cell.tensor.width()), x(ch, c.row, c.col));
      }
    }
  }
  EXPECT_EQ(total, 24u);
  EXPECT_EQ(seen, IndexStructure::full(6, 4).as_set());
}

TEST(PartitionSquare, RejectsNonDivisibleGrid) {
  EXPECT_THROW(partition_square(ImageTensor<double>(1, 6, 4), 4, 2), DivisibilityError);
  EXPECT_THROW(partition_square(ImageTensor<double>(1, 6, 4), 0, 2), DivisibilityError);
}

TEST(Compose, InvertsPartition) {
  Rng rng(26);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t mh = rng.between(1, 3), mw = rng.between(1, 3);
    const auto x = random_tensor<double>(rng.between(1, 3), mh * rng.between(1, 4), mw * rng.between(1, 4), rng);
    EXPECT_EQ(compose(partition_square(x, mh, mw)), x);
  }
}

TEST(Compose, SingleCell) {
  Rng rng(27);
  const auto x = random_tensor<double>(1, 3, 3, rng);
  EXPECT_EQ(compose(partition_square(x, 1, 1)), x);
}

TEST(Compose, CellOrderDoesNotMatter) {
  Rng rng(28);
  const auto x = random_tensor<double>(2, 6, 6, rng);
  auto p = partition_square(x, 3, 2);
  std::reverse(p.cells.begin(), p.cells.end());
  std::swap(p.cells[1], p.cells[4]);

  // Scatter-by-index oracle.
  ImageTensor<double> expected(2, 6, 6, -1.0);
  for (const auto& cell : p.cells) {
    for (std::size_t k = 0; k < cell.indices.size(); ++k) {
      for (std::size_t ch = 0; ch < 2; ++ch) {
        expected(ch, cell.indices[k].row, cell.indices[k].col) =
            cell.tensor.data()[ch * cell.tensor.pixels() + k];
      }
    }
  }
  EXPECT_EQ(compose(p), expected);
  EXPECT_EQ(compose(p), x);
}

TEST(Compose, RejectsInconsistentPartitionings) {
  Rng rng(29);
  const auto x = random_tensor<double>(1, 4, 4, rng);

  auto overlap = partition_square(x, 2, 2);
  overlap.cells[1].indices = overlap.cells[0].indices;
  EXPECT_THROW(compose(overlap), ShapeError);

  auto bad_shape = partition_square(x, 2, 2);
  bad_shape.cells[2].tensor = ImageTensor<double>(1, 1, 4);
  EXPECT_THROW(compose(bad_shape), ShapeError);

  auto missing = partition_square(x, 2, 2);
  missing.cells.pop_back();
  EXPECT_THROW(compose(missing), ShapeError);
}

TEST(Consistency, SquarePartitioningIsConsistent) {
  EXPECT_TRUE(check_consistency(2, 2, 2, {4, 4}));
  EXPECT_TRUE(check_consistency(4, 32, 32, {64, 64}));
  EXPECT_TRUE(check_consistency(3, 2, 5, {6, 10}));
}

TEST(Consistency, SingleCellIsAlwaysConsistent) {
  for (std::size_t d = 1; d <= 6; ++d) EXPECT_TRUE(check_consistency(d, 1, 1, {3, 5}));
}

TEST(Consistency, RowInterleavedPartitioningIsNot) {
  // Cell l holds every row r with r % m == l: not preserved by upsampling.
  const std::size_t m = 2;
  Partitioner interleaved = [m](std::size_t h, std::size_t w) {
    std::vector<std::vector<Coord>> rows(m);
    for (std::size_t r = 0; r < h; ++r) {
      for (std::size_t c = 0; c < w; ++c) rows[r % m].push_back({r, c});
    }
    std::vector<IndexStructure> cells;
    for (auto& cr : rows) cells.push_back(IndexStructure::from_coords(std::move(cr)));
    return cells;
  };
  EXPECT_FALSE(check_consistency(2, {4, 4}, interleaved));
  // Explicit set comparison for cell 0.
  const auto low = interleaved(4, 4)[0];
  const auto high = interleaved(8, 8)[0];
  EXPECT_FALSE(upsample_indices(low, 2).same_set(high));
  // Interleaving is trivially consistent only without upsampling.
  EXPECT_TRUE(check_consistency(1, {4, 4}, interleaved));
}

TEST(Consistency, NonDivisibleLowGridIsInconsistent) {
  EXPECT_FALSE(check_consistency(2, 3, 2, {4, 4}));
}

}  // namespace
}  // namespace gpa
