// Copyright 2026 The GPA Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

#include "gpa/tensor.hpp"

namespace gpa {

/// Seeded generator with a portable normal transform (std::normal_distribution
/// is implementation-defined, so it is not used).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Uniform in (0, 1), 53 random bits.
  double uniform() {
    return (static_cast<double>(engine_() >> 11) + 0.5) * (1.0 / 9007199254740992.0);
  }

  /// Standard normal via Box-Muller.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

  std::uint64_t next() { return engine_(); }

  /// Uniform integer in [lo, hi].
  std::size_t between(std::size_t lo, std::size_t hi) {
    return lo + static_cast<std::size_t>(engine_() % (hi - lo + 1));
  }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

template <Real T>
ImageTensor<T> random_tensor(std::size_t c, std::size_t h, std::size_t w, Rng& rng,
                             double stddev = 1.0) {
  ImageTensor<T> x(c, h, w);
  for (auto& v : x.data()) v = static_cast<T>(stddev * rng.normal());
  return x;
}

template <Real T>
Matrix<T> random_matrix(std::size_t rows, std::size_t cols, Rng& rng, double stddev = 1.0) {
  Matrix<T> m(rows, cols);
  for (auto& v : m.data()) v = static_cast<T>(stddev * rng.normal());
  return m;
}

}  // namespace gpa
