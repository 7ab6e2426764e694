// Copyright 2026 The GPA Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <memory>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "gpa/attention.hpp"
#include "gpa/cost.hpp"
#include "gpa/memory.hpp"
#include "gpa/random.hpp"

namespace gpa::bench {

/// Largest query count for which the full-attention oracle is run (64x64).
inline constexpr std::size_t kOracleLimit = 4096;

/// White noise box-blurred (periodic boundary) with a square kernel of width
/// round(correlation_length). Widths below 2 leave the noise untouched. The
/// blurred field is rescaled to unit variance.
template <Real T>
ImageTensor<T> generate_smooth_tensor(std::size_t c, std::size_t h, std::size_t w,
                                      double correlation_length, std::uint64_t seed) {
  if (correlation_length < 0) throw ConfigError("correlation length must be non-negative");
  Rng rng(seed);
  std::vector<double> noise(c * h * w);
  for (auto& x : noise) x = rng.normal();

  const auto width = static_cast<std::size_t>(std::llround(correlation_length));
  ImageTensor<T> out(c, h, w);
  if (width < 2) {
    for (std::size_t i = 0; i < noise.size(); ++i) out.data()[i] = static_cast<T>(noise[i]);
    return out;
  }

  // Separable: rows then columns. Dividing by width (not width^2) keeps unit variance.
  const std::size_t half = width / 2;
  std::vector<double> tmp(h * w);
  for (std::size_t ch = 0; ch < c; ++ch) {
    const double* src = noise.data() + ch * h * w;
    for (std::size_t r = 0; r < h; ++r) {
      for (std::size_t col = 0; col < w; ++col) {
        double s = 0.0;
        for (std::size_t k = 0; k < width; ++k) s += src[r * w + (col + w * width + k - half) % w];
        tmp[r * w + col] = s;
      }
    }
    for (std::size_t r = 0; r < h; ++r) {
      for (std::size_t col = 0; col < w; ++col) {
        double s = 0.0;
        for (std::size_t k = 0; k < width; ++k) s += tmp[((r + h * width + k - half) % h) * w + col];
        out(ch, r, col) = static_cast<T>(s / static_cast<double>(width));
      }
    }
  }
  return out;
}

/// Mean lag-1 autocorrelation along rows (horizontal neighbours), pooled
/// over channels.
template <Real T>
double lag1_autocorrelation(const ImageTensor<T>& x) {
  double mean = 0.0;
  for (T v : x.data()) mean += v;
  mean /= static_cast<double>(x.size());
  double num = 0.0, den = 0.0;
  for (std::size_t ch = 0; ch < x.channels(); ++ch) {
    for (std::size_t r = 0; r < x.height(); ++r) {
      for (std::size_t c = 0; c < x.width(); ++c) {
        const double a = x(ch, r, c) - mean;
        den += a * a;
        if (c + 1 < x.width()) num += a * (x(ch, r, c + 1) - mean);
      }
    }
  }
  return den > 0.0 ? num / den : 0.0;
}

struct ErrorReport {
  std::string config;  // GPA{m}_{kappa}_{s}
  std::string input;   // free-form descriptor
  double l1 = 0.0;
  double l2 = 0.0;
  double max_abs = 0.0;
};

template <Real T>
ErrorReport compare(const ImageTensor<T>& approx, const ImageTensor<T>& exact) {
  if (approx.shape() != exact.shape()) throw ShapeError("cannot compare tensors of different shape");
  ErrorReport r;
  double sq = 0.0;
  for (std::size_t i = 0; i < approx.size(); ++i) {
    const double d = std::abs(static_cast<double>(approx.data()[i]) - exact.data()[i]);
    r.l1 += d;
    sq += d * d;
    r.max_abs = std::max(r.max_abs, d);
  }
  r.l2 = std::sqrt(sq);
  return r;
}

/// Runs both the sparse approximation and the full-attention oracle.
template <Real T>
ErrorReport approx_error(const ImageTensor<T>& q, const ImageTensor<T>& k, const ImageTensor<T>& v,
                         const GpaConfig& cfg, std::string input_descriptor = {}) {
  if (q.pixels() > kOracleLimit || k.pixels() > kOracleLimit) {
    throw ConfigError("oracle infeasible: full attention is limited to " +
                      std::to_string(kOracleLimit) + " queries/keys (64x64), got " +
                      std::to_string(q.height()) + "x" + std::to_string(q.width()));
  }
  const auto approx = gpa_forward(q, k, v, cfg).output;
  const auto exact = full_attention(q, k, v, cfg.scaled);
  ErrorReport r = compare(approx, exact);
  r.config = config_name(cfg, q.height(), q.width());
  r.input = std::move(input_descriptor);
  return r;
}

/// Predicted and measured cost of one gpa_forward call.
struct CostReport {
  PredictedCost predicted;
  std::uint64_t measured_peak_elems = 0;
  std::uint64_t measured_phase1_peak_elems = 0;
  std::uint64_t measured_phase2_peak_elems = 0;
  double phase1_ms = 0.0;
  double phase2_ms = 0.0;

  double peak_ratio() const noexcept {
    const auto p = predicted.predicted_peak_elems();
    return p ? static_cast<double>(measured_peak_elems) / static_cast<double>(p) : 0.0;
  }
};

template <Real T>
CostReport measure_cost(const ImageTensor<T>& q, const ImageTensor<T>& k, const ImageTensor<T>& v,
                        const GpaConfig& cfg) {
  using clock = std::chrono::steady_clock;
  CostReport report;
  report.predicted = predicted_cost(cfg, q.channels(), v.channels(), q.height(), q.width());

  // Whole pass under one tracker, then each phase separately for the breakdown.
  report.measured_peak_elems = measure_peak_elements([&] { (void)gpa_forward(q, k, v, cfg); });

  std::optional<RelevantKeySets> sets;
  const auto t0 = clock::now();
  report.measured_phase1_peak_elems =
      measure_peak_elements([&] { sets = find_relevant_keys(q, k, cfg); });
  const auto t1 = clock::now();
  report.measured_phase2_peak_elems =
      measure_peak_elements([&] { (void)gpa_apply(q, k, v, *sets, cfg.scaled); });
  const auto t2 = clock::now();
  report.phase1_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
  report.phase2_ms = std::chrono::duration<double, std::milli>(t2 - t1).count();
  return report;
}

struct Size2 {
  std::size_t h = 0;
  std::size_t w = 0;
};

struct SweepRow {
  GpaConfig config;
  Size2 size;
  std::uint64_t seed = 0;
  std::string name;
  std::string status = "ok";  // "ok", "oracle_skipped" or "error: ..."
  std::optional<CostReport> cost;
  std::optional<ErrorReport> error;
};

struct SweepOptions {
  std::size_t c_k = 4;
  std::size_t c_v = 3;
  double correlation_length = 4.0;
  bool with_error = true;  // run the oracle where feasible
};

/// Synthetic smooth Q, K, V for one sweep row; K and V use derived seeds.
template <Real T>
std::array<ImageTensor<T>, 3> synthetic_inputs(const SweepOptions& opt, Size2 size,
                                               std::uint64_t seed) {
  return {generate_smooth_tensor<T>(opt.c_k, size.h, size.w, opt.correlation_length, 3 * seed),
          generate_smooth_tensor<T>(opt.c_k, size.h, size.w, opt.correlation_length, 3 * seed + 1),
          generate_smooth_tensor<T>(opt.c_v, size.h, size.w, opt.correlation_length, 3 * seed + 2)};
}

/// Cross product of configs x sizes x seeds in that nesting order. A row
/// whose config does not fit its size records the error and the sweep goes on.
template <Real T>
std::vector<SweepRow> sweep(const std::vector<GpaConfig>& configs, const std::vector<Size2>& sizes,
                            const std::vector<std::uint64_t>& seeds, const SweepOptions& opt = {}) {
  std::vector<SweepRow> rows;
  for (const auto& cfg : configs) {
    for (const auto& size : sizes) {
      for (auto seed : seeds) {
        SweepRow row{cfg, size, seed, config_name(cfg, size.h, size.w)};
        try {
          validate(cfg, size.h, size.w);
          const auto [q, k, v] = synthetic_inputs<T>(opt, size, seed);
          row.cost = measure_cost(q, k, v, cfg);
          if (opt.with_error && size.h * size.w <= kOracleLimit) {
            row.error = approx_error(q, k, v, cfg, "smooth seed=" + std::to_string(seed));
          } else if (opt.with_error) {
            row.status = "oracle_skipped";
          }
        } catch (const Error& e) {
          row.status = std::string("error: ") + e.what();
        }
        rows.push_back(std::move(row));
      }
    }
  }
  return rows;
}

/// Default cost sweep: kappa ablation around the pivot grid plus two d=4
/// variants, at 64x64 and 128x128.
inline std::vector<GpaConfig> default_sweep_configs() {
  return {
      {2, 32, 32, 1, false}, {2, 32, 32, 2, false}, {2, 32, 32, 4, false}, {2, 32, 32, 12, false},
      {4, 16, 16, 12, false}, {4, 8, 8, 12, false},
  };
}

inline std::vector<Size2> default_sweep_sizes() { return {{64, 64}, {128, 128}}; }

namespace detail {

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace detail

/// Column order of sweep CSV files. Timing columns are appended only when
/// requested, since they are the one non-deterministic output.
inline std::string sweep_csv_header(bool timing) {
  std::string h =
      "config,h,w,seed,d,m_h,m_w,kappa,phase1_affinity_elems,phase2_affinity_elems,"
      "gathered_key_elems,gathered_value_elems,phase1_macs,phase2_macs,full_affinity_elems,"
      "predicted_peak_elems,measured_peak_elems,l1_error,l2_error,max_abs_error,status";
  if (timing) h += ",phase1_ms,phase2_ms";
  return h;
}

inline void write_sweep_csv(std::ostream& os, const std::vector<SweepRow>& rows, bool timing = false) {
  os << sweep_csv_header(timing) << '\n';
  for (const auto& r : rows) {
    os << r.name << ',' << r.size.h << ',' << r.size.w << ',' << r.seed << ',' << r.config.d << ','
       << r.config.m_h << ',' << r.config.m_w << ',' << r.config.kappa << ',';
    if (r.cost) {
      const auto& p = r.cost->predicted;
      os << p.phase1_affinity_elems << ',' << p.phase2_affinity_elems << ','
         << p.gathered_key_elems << ',' << p.gathered_value_elems << ',' << p.phase1_macs << ','
         << p.phase2_macs << ',' << p.full_affinity_elems << ',' << p.predicted_peak_elems() << ','
         << r.cost->measured_peak_elems << ',';
    } else {
      os << ",,,,,,,,,";
    }
    if (r.error) {
      std::ostringstream e;
      e << std::setprecision(17) << r.error->l1 << ',' << r.error->l2 << ',' << r.error->max_abs;
      os << e.str() << ',';
    } else {
      os << ",,,";
    }
    os << detail::csv_field(r.status);
    if (timing) {
      std::ostringstream t;
      t << std::fixed << std::setprecision(3);
      if (r.cost) t << r.cost->phase1_ms << ',' << r.cost->phase2_ms;
      else t << ',';
      os << ',' << t.str();
    }
    os << '\n';
  }
}

}  // namespace gpa::bench
