#pragma once

#include <cstddef>
#include <functional>

namespace sdemix {

// Worker count: explicit value if nonzero, else SDEMIX_THREADS, else hardware concurrency.
std::size_t worker_count(std::size_t requested = 0);

// Runs fn(i) for i in [0, n); each index exactly once. Rethrows the
// exception of the smallest failing index.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn,
                  std::size_t threads = 0);

}  // namespace sdemix
