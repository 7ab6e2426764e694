// Copyright 2026 The GPA Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Hand-derived vector-Jacobian products for attention and for the sparse pass
// of grid partitioned attention (key selection held fixed), plus a central
// finite-difference checker.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "gpa/attention.hpp"
#include "gpa/random.hpp"

namespace gpa {

template <Real T>
struct AttentionGrads {
  ImageTensor<T> q;
  ImageTensor<T> k;
  ImageTensor<T> v;
};

namespace detail {

/// Gradients of <g, V softmax(s K^T Q)> on matrix views. Outputs must be
/// sized like their inputs and are overwritten.
template <Real T>
void attention_vjp(MatrixView<const T> q, MatrixView<const T> k, MatrixView<const T> v,
                   MatrixView<const T> g, MatrixView<T> gq, MatrixView<T> gk, MatrixView<T> gv,
                   bool scaled) {
  const std::size_t nk = k.cols;
  const std::size_t nq = q.cols;
  std::vector<T> a_buf(nk * nq), ga_buf(nk * nq);
  MatrixView<T> a{a_buf.data(), nk, nq};
  MatrixView<T> ga{ga_buf.data(), nk, nq};

  const T s = logit_scale<T>(q.rows, scaled);
  kernel::matmul_tn(k, q, a);
  if (scaled) kernel::scale(a, s);
  kernel::softmax_columns(a);

  kernel::matmul_nt(g, MatrixView<const T>(a), gv);  // gV = G A^T
  kernel::matmul_tn(v, g, ga);                        // gA = V^T G

  // Column softmax adjoint: gS = A * (gA - <A, gA>_col), then the logit scale.
  for (std::size_t j = 0; j < nq; ++j) {
    T dot = T(0);
    for (std::size_t i = 0; i < nk; ++i) dot += a(i, j) * ga(i, j);
    for (std::size_t i = 0; i < nk; ++i) ga(i, j) = s * a(i, j) * (ga(i, j) - dot);
  }
  kernel::matmul_nt(q, MatrixView<const T>(ga), gk);  // gK = Q gS^T
  kernel::matmul(k, MatrixView<const T>(ga), gq);     // gQ = K gS
}

}  // namespace detail

template <Real T>
AttentionGrads<T> full_attention_vjp(const ImageTensor<T>& q, const ImageTensor<T>& k,
                                     const ImageTensor<T>& v, const ImageTensor<T>& grad_out,
                                     bool scaled = false) {
  detail::check_attention_shapes(q, k, v);
  if (grad_out.channels() != v.channels() || grad_out.height() != q.height() ||
      grad_out.width() != q.width()) {
    throw ShapeError("cotangent shape " + to_string(grad_out.shape()) +
                     " does not match the attention output");
  }
  AttentionGrads<T> grads{ImageTensor<T>(q.shape()), ImageTensor<T>(k.shape()),
                          ImageTensor<T>(v.shape())};
  detail::attention_vjp(q.as_matrix(), k.as_matrix(), v.as_matrix(), grad_out.as_matrix(),
                        grads.q.as_matrix(), grads.k.as_matrix(), grads.v.as_matrix(), scaled);
  return grads;
}

/// Gradients of the sparse pass with `sets` treated as constants. The gather
/// adjoint scatter-adds into gK and gV; keys no cell selected get zero.
template <Real T>
AttentionGrads<T> gpa_vjp(const ImageTensor<T>& q, const ImageTensor<T>& k, const ImageTensor<T>& v,
                          const GpaConfig& cfg, const RelevantKeySets& sets,
                          const ImageTensor<T>& grad_out) {
  detail::check_sets(sets, q, k, v);
  if (sets.d != cfg.d || sets.grid != GridShape{cfg.m_h, cfg.m_w} || sets.kappa != cfg.kappa) {
    throw ShapeError("relevant key sets are stale: they were built with a different config");
  }
  if (grad_out.channels() != v.channels() || grad_out.height() != q.height() ||
      grad_out.width() != q.width()) {
    throw ShapeError("cotangent shape " + to_string(grad_out.shape()) +
                     " does not match the attention output");
  }

  const std::size_t m = sets.cells();
  const std::size_t dict = sets.dictionary_size();
  const std::size_t ck = q.channels();
  const std::size_t cv = v.channels();
  const std::size_t w = q.width();
  const std::size_t per_cell = sets.query_cells[0].size();

  struct CellGrads {
    std::vector<std::size_t> queries;
    std::vector<std::size_t> keys;
    std::vector<T> gq, gk, gv;
  };
  std::vector<CellGrads> cells(m);

  parallel_for(m, [&](std::size_t l) {
    CellGrads& cg = cells[l];
    cg.queries = sets.query_cells[l].flat(w);
    cg.keys = sets.high_res[l].flat(w);
    std::vector<T> qc(ck * per_cell), gc(cv * per_cell), kc(ck * dict), vc(cv * dict);
    MatrixView<T> qv{qc.data(), ck, per_cell}, gcv{gc.data(), cv, per_cell};
    MatrixView<T> kv{kc.data(), ck, dict}, vv{vc.data(), cv, dict};
    detail::gather_columns(q.as_matrix(), std::span<const std::size_t>(cg.queries), qv);
    detail::gather_columns(grad_out.as_matrix(), std::span<const std::size_t>(cg.queries), gcv);
    detail::gather_columns(k.as_matrix(), std::span<const std::size_t>(cg.keys), kv);
    detail::gather_columns(v.as_matrix(), std::span<const std::size_t>(cg.keys), vv);
    cg.gq.resize(ck * per_cell);
    cg.gk.resize(ck * dict);
    cg.gv.resize(cv * dict);
    detail::attention_vjp<T>(qv, kv, vv, gcv, {cg.gq.data(), ck, per_cell}, {cg.gk.data(), ck, dict},
                             {cg.gv.data(), cv, dict}, cfg.scaled);
  });

  // Serial scatter in cell order keeps the sums identical for any thread count.
  AttentionGrads<T> grads{ImageTensor<T>(q.shape()), ImageTensor<T>(k.shape()),
                          ImageTensor<T>(v.shape())};
  auto gq = grads.q.as_matrix();
  auto gk = grads.k.as_matrix();
  auto gv = grads.v.as_matrix();
  for (const auto& cg : cells) {
    for (std::size_t c = 0; c < ck; ++c) {
      for (std::size_t j = 0; j < per_cell; ++j) gq(c, cg.queries[j]) = cg.gq[c * per_cell + j];
      for (std::size_t j = 0; j < dict; ++j) gk(c, cg.keys[j]) += cg.gk[c * dict + j];
    }
    for (std::size_t c = 0; c < cv; ++c) {
      for (std::size_t j = 0; j < dict; ++j) gv(c, cg.keys[j]) += cg.gv[c * dict + j];
    }
  }
  return grads;
}

// ---------------------------------------------------------------------------
// Finite-difference checking

enum class GradTarget { full, gpa };

inline const char* to_string(GradTarget t) { return t == GradTarget::full ? "full" : "gpa"; }

struct GradCheckShape {
  std::size_t c_k = 1;
  std::size_t c_v = 1;
  std::size_t h = 1;
  std::size_t w = 1;
};

struct CoordinateError {
  char input = 'Q';  // 'Q', 'K' or 'V'
  std::size_t channel = 0;
  std::size_t row = 0;
  std::size_t col = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double abs_error = 0.0;
  double rel_error = 0.0;
  bool skipped = false;  // perturbation changed the key selection
};

struct InputErrors {
  double max_abs_error = 0.0;
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::size_t skipped = 0;
};

struct GradCheckReport {
  GradTarget target = GradTarget::full;
  double step = 1e-5;
  double max_abs_error = 0.0;
  double max_rel_error = 0.0;
  std::array<InputErrors, 3> per_input{};  // Q, K, V
  std::vector<CoordinateError> coordinates;

  std::size_t skipped() const noexcept {
    return per_input[0].skipped + per_input[1].skipped + per_input[2].skipped;
  }
};

/// Relative error used throughout: |a - n| / max(|a|, |n|, floor). The floor
/// is a fraction of the largest analytic gradient magnitude, so coordinates
/// whose true gradient is near zero are judged against the gradient scale.
struct GradCheckOptions {
  double step = 1e-5;
  double relative_floor = 1e-6;
  std::uint64_t seed = 0;
  bool zero_cotangent = false;
};

inline double default_threshold(GradTarget t) { return t == GradTarget::full ? 1e-6 : 1e-5; }

namespace detail {

inline double relative_error(double a, double n, double floor) {
  const double denom = std::max({std::abs(a), std::abs(n), floor});
  return denom > 0.0 ? std::abs(a - n) / denom : 0.0;
}

}  // namespace detail

/// Checks analytic gradients of <g, f(Q, K, V)> on the given inputs, where
/// f is full attention or the frozen-selection sparse pass of `cfg`.
inline GradCheckReport finite_diff_check(GradTarget which, const ImageTensor<double>& q,
                                         const ImageTensor<double>& k,
                                         const ImageTensor<double>& v,
                                         const ImageTensor<double>& g, const GpaConfig& cfg,
                                         const GradCheckOptions& opt = {}) {
  GradCheckReport report;
  report.target = which;
  report.step = opt.step;

  std::optional<RelevantKeySets> frozen;
  AttentionGrads<double> analytic;
  if (which == GradTarget::full) {
    analytic = full_attention_vjp(q, k, v, g, cfg.scaled);
  } else {
    frozen = find_relevant_keys(q, k, cfg);
    analytic = gpa_vjp(q, k, v, cfg, *frozen, g);
  }

  auto evaluate = [&](const ImageTensor<double>& qq, const ImageTensor<double>& kk,
                      const ImageTensor<double>& vv) {
    return which == GradTarget::full ? full_attention(qq, kk, vv, cfg.scaled)
                                     : gpa_apply(qq, kk, vv, *frozen, cfg.scaled);
  };
  auto selection_moved = [&](const ImageTensor<double>& qq, const ImageTensor<double>& kk) {
    if (which == GradTarget::full) return false;
    return find_relevant_keys(qq, kk, cfg).low_res != frozen->low_res;
  };

  double scale = 0.0;
  for (const auto* t : {&analytic.q, &analytic.k, &analytic.v}) {
    for (double x : t->data()) scale = std::max(scale, std::abs(x));
  }
  const double floor = std::max(opt.relative_floor * scale, 1e-300);

  const std::array<const ImageTensor<double>*, 3> inputs{&q, &k, &v};
  const std::array<const ImageTensor<double>*, 3> grads{&analytic.q, &analytic.k, &analytic.v};
  const char names[3] = {'Q', 'K', 'V'};

  for (std::size_t which_input = 0; which_input < 3; ++which_input) {
    const ImageTensor<double>& base = *inputs[which_input];
    InputErrors& stats = report.per_input[which_input];
    for (std::size_t idx = 0; idx < base.size(); ++idx) {
      std::array<ImageTensor<double>, 3> plus{q, k, v}, minus{q, k, v};
      plus[which_input].data()[idx] += opt.step;
      minus[which_input].data()[idx] -= opt.step;

      CoordinateError ce;
      ce.input = names[which_input];
      ce.channel = idx / base.pixels();
      ce.row = (idx % base.pixels()) / base.width();
      ce.col = idx % base.width();
      ce.analytic = grads[which_input]->data()[idx];

      if (which_input < 2 && (selection_moved(plus[0], plus[1]) || selection_moved(minus[0], minus[1]))) {
        ce.skipped = true;
        ++stats.skipped;
        report.coordinates.push_back(ce);
        continue;
      }

      const auto fp = evaluate(plus[0], plus[1], plus[2]);
      const auto fm = evaluate(minus[0], minus[1], minus[2]);
      double acc = 0.0;
      for (std::size_t i = 0; i < g.size(); ++i) acc += g.data()[i] * (fp.data()[i] - fm.data()[i]);
      ce.numeric = acc / (2.0 * opt.step);
      ce.abs_error = std::abs(ce.analytic - ce.numeric);
      ce.rel_error = detail::relative_error(ce.analytic, ce.numeric, floor);

      ++stats.checked;
      stats.max_abs_error = std::max(stats.max_abs_error, ce.abs_error);
      stats.max_rel_error = std::max(stats.max_rel_error, ce.rel_error);
      report.max_abs_error = std::max(report.max_abs_error, ce.abs_error);
      report.max_rel_error = std::max(report.max_rel_error, ce.rel_error);
      report.coordinates.push_back(ce);
    }
  }
  return report;
}

/// Draws random inputs and cotangent of the given shape from `opt.seed`.
inline GradCheckReport finite_diff_check(GradTarget which, const GradCheckShape& shape,
                                         const GpaConfig& cfg, const GradCheckOptions& opt = {}) {
  Rng rng(opt.seed);
  const auto q = random_tensor<double>(shape.c_k, shape.h, shape.w, rng);
  const auto k = random_tensor<double>(shape.c_k, shape.h, shape.w, rng);
  const auto v = random_tensor<double>(shape.c_v, shape.h, shape.w, rng);
  auto g = random_tensor<double>(shape.c_v, shape.h, shape.w, rng);
  if (opt.zero_cotangent) std::fill(g.data().begin(), g.data().end(), 0.0);
  return finite_diff_check(which, q, k, v, g, cfg, opt);
}

inline std::string summary_text(const GradCheckReport& r, double threshold) {
  std::ostringstream out;
  out << std::setprecision(6) << std::scientific;
  out << "target: " << to_string(r.target) << "\n";
  out << "step: " << r.step << "\n";
  out << "max_abs_error: " << r.max_abs_error << "\n";
  out << "max_rel_error: " << r.max_rel_error << "\n";
  const char names[3] = {'Q', 'K', 'V'};
  for (std::size_t i = 0; i < 3; ++i) {
    const auto& p = r.per_input[i];
    out << names[i] << ": max_abs=" << p.max_abs_error << " max_rel=" << p.max_rel_error
        << " checked=" << p.checked << " skipped=" << p.skipped << "\n";
  }
  out << "threshold: " << threshold << "\n";
  out << "result: " << (r.max_rel_error < threshold ? "PASS" : "FAIL") << "\n";
  return out.str();
}

inline void write_csv(std::ostream& os, const GradCheckReport& r) {
  os << "input,channel,row,col,analytic,numeric,abs_error,rel_error,skipped\n";
  os << std::setprecision(17);
  for (const auto& c : r.coordinates) {
    os << c.input << ',' << c.channel << ',' << c.row << ',' << c.col << ',' << c.analytic << ','
       << c.numeric << ',' << c.abs_error << ',' << c.rel_error << ',' << (c.skipped ? 1 : 0)
       << '\n';
  }
}

}  // namespace gpa
