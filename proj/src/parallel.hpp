#pragma once

#include <algorithm>
#include <atomic>
#include <thread>
#include <vector>

namespace egm::detail {

/// Runs work(i) for i in [0, count) on up to `threads` threads. Items are
/// claimed dynamically; callers write results into per-item slots.
template <class Work>
void parallel_for(int count, int threads, Work work) {
  threads = std::max(1, std::min(threads, count));
  std::atomic<int> next{0};
  auto worker = [&]() {
    for (int i = next++; i < count; i = next++) work(i);
  };
  if (threads == 1) {
    worker();
    return;
  }
  std::vector<std::thread> pool;
  for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
}

}  // namespace egm::detail
