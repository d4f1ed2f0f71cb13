#pragma once

#include <cstddef>
#include <functional>

namespace m2m {

/// Caps internal parallelism; 0 selects std::thread::hardware_concurrency().
void set_thread_count(unsigned n);
unsigned thread_count();

/// Runs fn(i) for i in [0, n). Work items are claimed dynamically, so callers
/// must make each item write to disjoint state; reductions happen afterwards
/// in index order to stay independent of the thread count.
/// The first exception thrown by any item is rethrown on the calling thread.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace m2m
