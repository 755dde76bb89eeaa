#pragma once

#include <cstddef>
#include <functional>

namespace coast {

/// Worker count from an explicit request, falling back to the COAST_THREADS
/// environment variable and then to 1. Values < 1 are treated as 1.
int resolve_threads(int requested);

/// Splits [0, n) into `threads` contiguous ranges and runs
/// `body(begin, end, worker)` for each, one std::thread per range. The first
/// exception thrown by any worker is rethrown after all workers finish.
void parallel_for(std::size_t n, int threads,
                  const std::function<void(std::size_t, std::size_t, int)> &body);

}  // namespace coast
