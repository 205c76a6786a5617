#pragma once

#include <cstdlib>
#include <string>
#include <thread>
#include <vector>

namespace cvdisc {

// Worker cap: CVDISC_THREADS when set, hardware concurrency otherwise.
inline int worker_count() {
  int n = static_cast<int>(std::thread::hardware_concurrency());
  if (n < 1) n = 1;
  if (const char* env = std::getenv("CVDISC_THREADS")) {
    int cap = std::atoi(env);
    if (cap >= 1 && cap < n) n = cap;
  }
  return n;
}

// Runs body(i) for i in [0, n). Results must be written to disjoint
// per-index slots; the partition is static so output is identical to the
// sequential order regardless of worker count.
template <typename F>
inline void parallel_for(long n, F&& body) {
  int workers = worker_count();
  if (workers <= 1 || n <= 1) {
    for (long i = 0; i < n; ++i) body(i);
    return;
  }
  if (workers > n) workers = static_cast<int>(n);
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (long i = w; i < n; i += workers) body(i);
    });
  }
  for (auto& t : pool) t.join();
}

}  // namespace cvdisc
