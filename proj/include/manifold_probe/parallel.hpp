#pragma once

#include <cstddef>
#include <functional>

namespace manifold_probe {

/// Upper bound on worker threads requested by the caller; 0 means "hardware
/// concurrency". The environment variable MANIFOLD_PROBE_THREADS caps it further.
void set_worker_limit(std::size_t limit);

std::size_t worker_count();

/// Runs fn(i) for i in [0, n). Results must be written to per-index slots.
/// Nested calls run serially on the calling worker. If any invocation throws,
/// the exception from the lowest failing index is rethrown after all workers
/// finish.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace manifold_probe
