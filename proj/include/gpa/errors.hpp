// Copyright 2026 The GPA Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace gpa {

/// Base class for every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Mismatched channel counts, spatial shapes or matrix dimensions.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A size that must be a multiple of a factor is not.
class DivisibilityError : public Error {
 public:
  using Error::Error;
};

/// Invalid hyper-parameters or config text.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed tensor files or other serialized input.
class FormatError : public Error {
 public:
  using Error::Error;
};

namespace detail {

inline void require_divisible(std::size_t value, std::size_t factor,
                              const std::string& what) {
  if (factor == 0 || value % factor != 0) {
    throw DivisibilityError(what + " (" + std::to_string(value) +
                            ") is not divisible by " + std::to_string(factor));
  }
}

}  // namespace detail
}  // namespace gpa
