// Copyright 2026 The GPA Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>

#include "gpa/errors.hpp"
#include "gpa/spatial.hpp"

namespace gpa {

/// Hyper-parameters of grid partitioned attention.
struct GpaConfig {
  std::size_t d = 1;      // downsampling factor for the relevance pass
  std::size_t m_h = 1;    // partition grid rows
  std::size_t m_w = 1;    // partition grid cols
  std::size_t kappa = 1;  // low-resolution keys kept per cell
  bool scaled = false;    // multiply logits by 1/sqrt(c_k)

  std::size_t cells() const noexcept { return m_h * m_w; }
  friend bool operator==(const GpaConfig&, const GpaConfig&) = default;
};

/// Checks every constraint against an h x w query/key grid and names the
/// first one that fails.
inline void validate(const GpaConfig& cfg, std::size_t h, std::size_t w) {
  if (cfg.d == 0) throw ConfigError("d must be positive");
  if (cfg.m_h == 0 || cfg.m_w == 0) throw ConfigError("m must be positive in both directions");
  if (cfg.kappa == 0) throw ConfigError("kappa must be positive");
  detail::require_divisible(h, cfg.d, "height");
  detail::require_divisible(w, cfg.d, "width");
  const std::size_t hl = h / cfg.d;
  const std::size_t wl = w / cfg.d;
  detail::require_divisible(hl, cfg.m_h, "downsampled height h/d");
  detail::require_divisible(wl, cfg.m_w, "downsampled width w/d");
  if (cfg.kappa > hl * wl) {
    throw ConfigError("kappa (" + std::to_string(cfg.kappa) + ") exceeds the " +
                      std::to_string(hl * wl) + " low-resolution keys h/d * w/d");
  }
}

/// Parses "MHxMW"; a bare integer m is accepted when it is a perfect square.
inline GridShape parse_grid(std::string_view text) {
  auto to_count = [&](std::string_view part) -> std::size_t {
    if (part.empty() || part.find_first_not_of("0123456789") != std::string_view::npos) {
      throw ConfigError("malformed grid '" + std::string(text) + "', expected MHxMW");
    }
    return std::stoul(std::string(part));
  };
  const auto x = text.find('x');
  if (x == std::string_view::npos) {
    const std::size_t m = to_count(text);
    const auto root = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(m))));
    if (root * root != m) {
      throw ConfigError("scalar m=" + std::to_string(m) + " has no square factorization; use MHxMW");
    }
    return {root, root};
  }
  return {to_count(text.substr(0, x)), to_count(text.substr(x + 1))};
}

inline std::string format_grid(GridShape g) {
  return std::to_string(g.rows) + "x" + std::to_string(g.cols);
}

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline bool parse_bool(std::string_view v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("expected a boolean, got '" + std::string(v) + "'");
}

}  // namespace detail

/// Reads `key=value` lines (d, m_h, m_w, kappa, scaled). Blank lines and
/// lines starting with '#' are ignored. Missing keys keep their defaults.
inline GpaConfig parse_config(std::string_view text) {
  GpaConfig cfg;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto body = detail::trim(line);
    if (body.empty() || body.front() == '#') continue;
    const auto eq = body.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key=value");
    }
    const auto key = detail::trim(body.substr(0, eq));
    const auto value = detail::trim(body.substr(eq + 1));
    auto count = [&]() -> std::size_t {
      if (value.empty() || value.find_first_not_of("0123456789") != std::string_view::npos) {
        throw ConfigError("config line " + std::to_string(lineno) + ": '" + std::string(key) +
                          "' needs a non-negative integer");
      }
      return std::stoul(std::string(value));
    };
    if (key == "d") {
      cfg.d = count();
    } else if (key == "m_h") {
      cfg.m_h = count();
    } else if (key == "m_w") {
      cfg.m_w = count();
    } else if (key == "kappa") {
      cfg.kappa = count();
    } else if (key == "scaled") {
      cfg.scaled = detail::parse_bool(value);
    } else {
      throw ConfigError("config line " + std::to_string(lineno) + ": unknown key '" +
                        std::string(key) + "'");
    }
  }
  return cfg;
}

inline std::string to_config_text(const GpaConfig& cfg) {
  std::ostringstream out;
  out << "d=" << cfg.d << "\nm_h=" << cfg.m_h << "\nm_w=" << cfg.m_w << "\nkappa=" << cfg.kappa
      << "\nscaled=" << (cfg.scaled ? "true" : "false") << "\n";
  return out.str();
}

/// Named layer schedules. Resolves to nullopt where the schedule uses full
/// attention (inputs of 64 rows or fewer).
///   pivot:   square inputs, d chosen so the relevance pass runs at 64x64,
///            m = 32x32, kappa = 12 (d=2 at 128x128, d=4 at 256x256).
///   highres: 2:1 inputs, relevance pass at 64x32, m = 64x32 single-pixel
///            cells, kappa = 4 (d=2,4,8 at 128x64, 256x128, 512x256).
inline std::optional<GpaConfig> resolve_preset(std::string_view name, std::size_t h,
                                               std::size_t w) {
  if (name == "pivot") {
    if (h != w) throw ConfigError("preset 'pivot' needs a square input");
    if (h <= 64) return std::nullopt;
    detail::require_divisible(h, 64, "pivot input height");
    return GpaConfig{h / 64, 32, 32, 12, false};
  }
  if (name == "highres") {
    if (h != 2 * w) throw ConfigError("preset 'highres' needs an input with height = 2 * width");
    if (h <= 64) return std::nullopt;
    detail::require_divisible(h, 64, "highres input height");
    return GpaConfig{h / 64, 64, 32, 4, false};
  }
  throw ConfigError("unknown preset '" + std::string(name) + "' (known: pivot, highres)");
}

/// GPA{m}_{kappa}_{s}, where s is the relevance-pass resolution: a single
/// number for square grids, "HxW" otherwise.
inline std::string config_name(const GpaConfig& cfg, std::size_t h, std::size_t w) {
  const std::size_t hl = cfg.d ? h / cfg.d : 0;
  const std::size_t wl = cfg.d ? w / cfg.d : 0;
  const std::string s = hl == wl ? std::to_string(hl) : std::to_string(hl) + "x" + std::to_string(wl);
  return "GPA" + std::to_string(cfg.cells()) + "_" + std::to_string(cfg.kappa) + "_" + s;
}

}  // namespace gpa
