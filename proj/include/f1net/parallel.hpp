#pragma once

#include <atomic>
#include <functional>
#include <thread>
#include <vector>

namespace f1net {

// Runs fn(i) for i in [0, n). Each task must write only to its own slot of
// any shared output, so results are identical for every worker count.
inline void parallel_for(size_t n, int threads, const std::function<void(size_t)>& fn) {
  if (threads <= 1 || n <= 1) {
    for (size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<size_t> next{0};
  auto worker = [&] {
    for (;;) {
      size_t i = next.fetch_add(1);
      if (i >= n) return;
      fn(i);
    }
  };
  std::vector<std::thread> pool;
  int nw = std::min<int>(threads, static_cast<int>(n));
  pool.reserve(nw);
  for (int t = 0; t < nw; ++t) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
}

}  // namespace f1net
