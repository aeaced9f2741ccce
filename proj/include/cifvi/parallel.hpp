#pragma once

#include <algorithm>
#include <cstdlib>
#include <exception>
#include <string>
#include <thread>
#include <vector>

namespace cifvi {

/// Worker cap from CIFVI_THREADS; defaults to 1.
inline unsigned worker_threads() {
  const char* env = std::getenv("CIFVI_THREADS");
  if (env == nullptr) return 1;
  try {
    const int n = std::stoi(env);
    return n > 0 ? static_cast<unsigned>(n) : 1U;
  } catch (...) {
    return 1;
  }
}

/// Runs fn(c) for c in [0, chunks). Every chunk writes only its own output
/// slot, so results do not depend on the number of workers.
template <typename Fn>
void for_each_chunk(std::size_t chunks, Fn&& fn) {
  const unsigned workers = std::min<std::size_t>(worker_threads(), std::max<std::size_t>(chunks, 1));
  if (workers <= 1) {
    for (std::size_t c = 0; c < chunks; ++c) fn(c);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(workers);
  for (unsigned t = 0; t < workers; ++t) {
    pool.emplace_back([&, t] {
      try {
        for (std::size_t c = t; c < chunks; c += workers) fn(c);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace cifvi
