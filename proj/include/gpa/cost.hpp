// Copyright 2026 The GPA Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cstdint>

#include "gpa/config.hpp"

namespace gpa {

/// Closed-form element and multiply-accumulate counts for one forward pass.
/// n = h*w queries and keys; n' = n/d^2; D = kappa*d^2 keys per cell.
struct PredictedCost {
  std::uint64_t n = 0;
  std::uint64_t low_res_n = 0;

  // Relevance pass.
  std::uint64_t downsampled_elems = 0;      // Q' and K': 2 * c_k * n'
  std::uint64_t phase1_affinity_elems = 0;  // (n')^2
  std::uint64_t phase1_macs = 0;            // c_k * n'^2

  // Sparse pass.
  std::uint64_t query_cell_elems = 0;       // partitioned Q: c_k * n
  std::uint64_t phase2_affinity_elems = 0;  // m * (n/m) * D = n * d^2 * kappa
  std::uint64_t gathered_key_elems = 0;     // m * c_k * D
  std::uint64_t gathered_value_elems = 0;   // m * c_v * D
  std::uint64_t output_elems = 0;           // c_v * n (cell outputs and composed output each)
  std::uint64_t phase2_macs = 0;            // n * D * (c_k + c_v)

  // Full-attention baseline.
  std::uint64_t full_affinity_elems = 0;    // n^2
  std::uint64_t full_macs = 0;              // n^2 * (c_k + c_v)
  std::uint64_t full_peak_elems = 0;        // n^2 + c_v * n

  /// Buffers simultaneously live during each pass of gpa_forward.
  std::uint64_t phase1_live_elems() const noexcept {
    return downsampled_elems + phase1_affinity_elems;
  }
  std::uint64_t phase2_live_elems() const noexcept {
    return query_cell_elems + gathered_key_elems + gathered_value_elems + phase2_affinity_elems +
           2 * output_elems;
  }
  /// Peak transient elements of gpa_forward (inputs excluded).
  std::uint64_t predicted_peak_elems() const noexcept {
    return std::max(phase1_live_elems(), phase2_live_elems());
  }
};

inline PredictedCost predicted_cost(const GpaConfig& cfg, std::uint64_t c_k, std::uint64_t c_v,
                                    std::uint64_t h, std::uint64_t w) {
  PredictedCost p;
  const std::uint64_t d2 = static_cast<std::uint64_t>(cfg.d) * cfg.d;
  const std::uint64_t m = cfg.cells();
  const std::uint64_t dict = cfg.kappa * d2;
  p.n = h * w;
  p.low_res_n = p.n / d2;

  p.downsampled_elems = 2 * c_k * p.low_res_n;
  p.phase1_affinity_elems = p.low_res_n * p.low_res_n;
  p.phase1_macs = c_k * p.phase1_affinity_elems;

  p.query_cell_elems = c_k * p.n;
  p.phase2_affinity_elems = m * (p.n / m) * dict;
  p.gathered_key_elems = m * c_k * dict;
  p.gathered_value_elems = m * c_v * dict;
  p.output_elems = c_v * p.n;
  p.phase2_macs = p.phase2_affinity_elems * (c_k + c_v);

  p.full_affinity_elems = p.n * p.n;
  p.full_macs = p.full_affinity_elems * (c_k + c_v);
  p.full_peak_elems = p.full_affinity_elems + c_v * p.n;
  return p;
}

}  // namespace gpa
