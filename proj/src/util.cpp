#include "fairbat/util.hpp"

#include <algorithm>
#include <cstdlib>
#include <thread>
#include <vector>

namespace fairbat {

int eval_thread_count() {
  const char* env = std::getenv("FAIRBAT_THREADS");
  if (!env) return 1;
  int n = std::atoi(env);
  return std::max(1, n);
}

void parallel_for(int64_t n, const std::function<void(int64_t, int64_t)>& fn) {
  if (n <= 0) return;
  int threads = static_cast<int>(std::min<int64_t>(eval_thread_count(), n));
  if (threads <= 1) {
    fn(0, n);
    return;
  }
  std::vector<std::thread> pool;
  int64_t chunk = (n + threads - 1) / threads;
  for (int t = 0; t < threads; ++t) {
    int64_t lo = t * chunk;
    int64_t hi = std::min<int64_t>(n, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([&fn, lo, hi] { fn(lo, hi); });
  }
  for (auto& th : pool) th.join();
}

}  // namespace fairbat
