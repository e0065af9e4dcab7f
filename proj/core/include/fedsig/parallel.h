#pragma once

#include <cstddef>
#include <functional>

namespace fedsig {

// Worker cap from FEDSIG_THREADS, else the hardware concurrency (>= 1).
std::size_t thread_cap();

// Runs fn(0..n-1) on up to `threads` workers. Each index runs exactly once;
// the first exception thrown by any call is rethrown after all workers stop.
void parallel_for(std::size_t n, std::size_t threads,
                  const std::function<void(std::size_t)>& fn);

}  // namespace fedsig
