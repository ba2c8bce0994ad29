#pragma once

#include <cstdint>
#include <functional>

namespace lateralgrad {

/// Worker count: LATERALGRAD_THREADS if set (clamped to >= 1), otherwise the
/// hardware concurrency.
int worker_count();

/// Runs fn(i) for i in [0, n). Work is split into contiguous index ranges,
/// one per worker; each index is handled by exactly one thread, so callers
/// that write disjoint outputs per index get bit-identical results for any
/// thread count. Nested calls (from inside a worker) run serially.
void parallel_for(int64_t n, const std::function<void(int64_t)>& fn);

}  // namespace lateralgrad
