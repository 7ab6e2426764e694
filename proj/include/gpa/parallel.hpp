// Copyright 2026 The GPA Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdlib>
#include <exception>
#include <string>
#include <thread>
#include <vector>

#include "gpa/memory.hpp"

namespace gpa {

/// Worker count from GPA_THREADS; unset, 0 or unparsable means one per core.
inline std::size_t thread_count() {
  std::size_t requested = 0;
  if (const char* env = std::getenv("GPA_THREADS")) {
    try {
      requested = static_cast<std::size_t>(std::stoul(env));
    } catch (const std::exception&) {
      requested = 0;
    }
  }
  if (requested == 0) {
    requested = std::max(1u, std::thread::hardware_concurrency());
  }
  return requested;
}

/// Calls fn(i) for i in [0, n), statically split into contiguous chunks.
/// Each index is processed exactly once regardless of the thread count, so
/// callers that write disjoint outputs get results identical to a serial loop.
template <class Fn>
void parallel_for(std::size_t n, Fn&& fn, std::size_t threads = thread_count()) {
  threads = std::min(threads, n);
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }

  auto tracker = detail::current_tracker();
  std::vector<std::exception_ptr> errors(threads);
  std::vector<std::thread> workers;
  workers.reserve(threads - 1);

  auto run_chunk = [&](std::size_t t) {
    const std::size_t begin = n * t / threads;
    const std::size_t end = n * (t + 1) / threads;
    try {
      for (std::size_t i = begin; i < end; ++i) fn(i);
    } catch (...) {
      errors[t] = std::current_exception();
    }
  };

  for (std::size_t t = 1; t < threads; ++t) {
    workers.emplace_back([&, t] {
      TrackingScope scope(tracker);
      run_chunk(t);
    });
  }
  run_chunk(0);
  for (auto& w : workers) w.join();

  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace gpa
