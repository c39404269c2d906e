#pragma once

#include <cstddef>
#include <exception>
#include <functional>

namespace kabi {

// Worker count: explicit value if > 0, else KABI_THREADS, else hardware concurrency.
std::size_t resolve_threads(std::size_t requested = 0);

// Process-wide default used when callers pass 0.
void set_default_threads(std::size_t n);
std::size_t default_threads();

// Runs body(i) for i in [0, n) on up to `threads` workers with static chunking.
// Callers write results by index, so output never depends on scheduling.
// The first exception thrown by any worker is rethrown after all workers join.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body, std::size_t threads = 0);

}  // namespace kabi
