#pragma once

#include <cstdlib>
#include <thread>
#include <vector>

namespace pnikit::internal {

/// Worker count from PNIKIT_WORKERS; defaults to 1 (fully sequential).
inline int worker_count() {
  if (const char* env = std::getenv("PNIKIT_WORKERS")) {
    const int n = std::atoi(env);
    if (n >= 1) return n;
  }
  return 1;
}

/// Runs fn(begin, end) over disjoint chunks of [0, n). With one worker the
/// call happens inline.
template <typename Fn>
void parallel_chunks(int n, int workers, Fn&& fn) {
  if (n <= 0) return;
  if (workers <= 1 || n == 1) {
    fn(0, n);
    return;
  }
  const int used = std::min(workers, n);
  std::vector<std::thread> threads;
  threads.reserve(used);
  const int base = n / used;
  const int extra = n % used;
  int begin = 0;
  for (int w = 0; w < used; ++w) {
    const int len = base + (w < extra ? 1 : 0);
    threads.emplace_back([&fn, begin, len] { fn(begin, begin + len); });
    begin += len;
  }
  for (std::thread& t : threads) t.join();
}

}  // namespace pnikit::internal
