#pragma once

#include <cstddef>
#include <functional>

namespace poison {

/// Worker count from the POISON_WORKERS environment variable, else hardware concurrency.
std::size_t worker_count();

/// Runs fn(i) for i in [0, n) on up to worker_count() threads. Results must be written
/// by index so the outcome does not depend on scheduling. The first exception thrown by
/// any task is rethrown after all workers join.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace poison
