#include "coast/parallel.hpp"

#include <algorithm>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace coast {

int resolve_threads(int requested) {
  if (requested >= 1) return requested;
  if (const char *env = std::getenv("COAST_THREADS")) {
    try {
      const int v = std::stoi(env);
      if (v >= 1) return v;
    } catch (const std::exception &) {
      // Unparseable values fall through to the sequential default.
    }
  }
  return 1;
}

void parallel_for(std::size_t n, int threads,
                  const std::function<void(std::size_t, std::size_t, int)> &body) {
  const std::size_t workers =
      std::max<std::size_t>(1, std::min<std::size_t>(threads < 1 ? 1 : threads, n));
  if (workers <= 1) {
    if (n > 0) body(0, n, 0);
    return;
  }
  std::exception_ptr first;
  std::mutex guard;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    const std::size_t begin = n * w / workers;
    const std::size_t end = n * (w + 1) / workers;
    pool.emplace_back([&, begin, end, w] {
      try {
        body(begin, end, static_cast<int>(w));
      } catch (...) {
        std::lock_guard<std::mutex> lock(guard);
        if (!first) first = std::current_exception();
      }
    });
  }
  for (auto &t : pool) t.join();
  if (first) std::rethrow_exception(first);
}

}  // namespace coast
