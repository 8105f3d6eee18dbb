#pragma once

#include <atomic>
#include <future>
#include <thread>
#include <vector>

namespace sing {

// Runs fn(i) for i in [0,n) on up to `threads` workers. Results must be
// written into per-index slots by the caller; any reduction happens after
// this returns, in index order, so the outcome does not depend on
// scheduling.
template <typename Fn>
void parallel_for(int n, int threads, Fn&& fn) {
  if (threads <= 0) {
    threads = static_cast<int>(std::thread::hardware_concurrency());
    if (threads < 1) threads = 1;
  }
  if (n <= 1 || threads == 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::future<void>> futures;
  futures.reserve(n);
  // One task per index; the async pool is small so oversubscription stays
  // bounded by n.
  std::atomic<int> next{0};
  const int workers = std::min(threads, n);
  for (int w = 0; w < workers; ++w) {
    futures.push_back(std::async(std::launch::async, [&]() {
      for (;;) {
        const int i = next.fetch_add(1);
        if (i >= n) return;
        fn(i);
      }
    }));
  }
  for (auto& f : futures) f.get();
}

}  // namespace sing
