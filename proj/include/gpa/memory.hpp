// Copyright 2026 The GPA Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <atomic>
#include <cstddef>
#include <memory>
#include <type_traits>
#include <utility>
#include <vector>

namespace gpa {

/// Counts live and peak numeric elements allocated through TrackedAllocator
/// while it is installed on a thread. Counts are in elements, not bytes.
class AllocationTracker {
 public:
  void on_allocate(std::size_t n) noexcept {
    const std::size_t now = live_.fetch_add(n, std::memory_order_relaxed) + n;
    std::size_t peak = peak_.load(std::memory_order_relaxed);
    while (now > peak &&
           !peak_.compare_exchange_weak(peak, now, std::memory_order_relaxed)) {
    }
  }

  void on_release(std::size_t n) noexcept {
    live_.fetch_sub(n, std::memory_order_relaxed);
  }

  std::size_t live() const noexcept { return live_.load(std::memory_order_relaxed); }
  std::size_t peak() const noexcept { return peak_.load(std::memory_order_relaxed); }

 private:
  std::atomic<std::size_t> live_{0};
  std::atomic<std::size_t> peak_{0};
};

namespace detail {

inline std::shared_ptr<AllocationTracker>& current_tracker() noexcept {
  thread_local std::shared_ptr<AllocationTracker> tracker;
  return tracker;
}

}  // namespace detail

/// Installs a tracker on the calling thread for the lifetime of the scope.
class TrackingScope {
 public:
  explicit TrackingScope(std::shared_ptr<AllocationTracker> tracker)
      : previous_(std::exchange(detail::current_tracker(), std::move(tracker))) {}
  ~TrackingScope() { detail::current_tracker() = std::move(previous_); }

  TrackingScope(const TrackingScope&) = delete;
  TrackingScope& operator=(const TrackingScope&) = delete;

 private:
  std::shared_ptr<AllocationTracker> previous_;
};

/// Allocator that binds to whichever tracker is installed when it is created.
/// Memory is always released against the tracker that paid for it.
template <class T>
class TrackedAllocator {
 public:
  using value_type = T;
  using propagate_on_container_copy_assignment = std::false_type;
  using propagate_on_container_move_assignment = std::true_type;
  using propagate_on_container_swap = std::true_type;

  TrackedAllocator() noexcept : tracker_(detail::current_tracker()) {}

  template <class U>
  TrackedAllocator(const TrackedAllocator<U>& other) noexcept  // NOLINT
      : tracker_(other.tracker()) {}

  T* allocate(std::size_t n) {
    T* p = std::allocator<T>{}.allocate(n);
    if (tracker_) tracker_->on_allocate(n);
    return p;
  }

  void deallocate(T* p, std::size_t n) noexcept {
    std::allocator<T>{}.deallocate(p, n);
    if (tracker_) tracker_->on_release(n);
  }

  TrackedAllocator select_on_container_copy_construction() const noexcept {
    return TrackedAllocator{};
  }

  const std::shared_ptr<AllocationTracker>& tracker() const noexcept { return tracker_; }

  template <class U>
  friend bool operator==(const TrackedAllocator& a, const TrackedAllocator<U>& b) noexcept {
    return a.tracker_ == b.tracker();
  }

 private:
  std::shared_ptr<AllocationTracker> tracker_;
};

template <class T>
using TrackedBuffer = std::vector<T, TrackedAllocator<T>>;

/// Runs `fn` with a fresh tracker installed and returns the peak number of
/// simultaneously live tensor elements it allocated. Worker threads started
/// through parallel_for inherit the tracker.
template <class Fn>
std::size_t measure_peak_elements(Fn&& fn) {
  auto tracker = std::make_shared<AllocationTracker>();
  {
    TrackingScope scope(tracker);
    std::forward<Fn>(fn)();
  }
  return tracker->peak();
}

}  // namespace gpa
