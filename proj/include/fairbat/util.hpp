#pragma once

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>

namespace fairbat {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Shards [0, n) into contiguous ranges and runs fn(begin, end) on worker
// threads. Thread count is capped by the FAIRBAT_THREADS env var (default 1,
// i.e. run inline). Results must be written to disjoint per-index slots so the
// merge is deterministic regardless of thread count.
void parallel_for(int64_t n, const std::function<void(int64_t, int64_t)>& fn);

int eval_thread_count();

}  // namespace fairbat
