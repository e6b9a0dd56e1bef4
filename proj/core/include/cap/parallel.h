#pragma once

#include <cstddef>
#include <functional>

namespace cap {

// Worker cap from CAP_WORKERS, else the hardware thread count (at least 1).
std::size_t worker_count();

// Runs fn(i) for i in [0, n). Callers write results into per-index slots and
// reduce in index order, so output does not depend on the worker count. If
// several calls throw, the exception from the lowest index is rethrown.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn, std::size_t workers = worker_count());

}  // namespace cap
