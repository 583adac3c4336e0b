#pragma once

#include <cstddef>
#include <functional>

namespace cmiprune {

/// Worker count used by parallel loops: hardware concurrency, capped by the
/// CMIPRUNE_THREADS environment variable when it is set to a positive integer.
std::size_t worker_count();

/// Overrides the worker count for the current process (0 restores the default).
void set_worker_count(std::size_t count);

/// Runs body(i) for i in [0, count). Each index is visited exactly once; the
/// caller owns result placement, so reductions stay order-independent.
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& body);

}  // namespace cmiprune
