#pragma once

#include <algorithm>
#include <atomic>
#include <exception>
#include <thread>
#include <vector>

#include "hmfg/grid.hpp"

namespace hmfg {

/// Number of workers used when none is requested.
inline int default_workers() { return std::max(1u, std::thread::hardware_concurrency()); }

/// Runs f(i) for i in [0, count) on up to `workers` threads. Each call must write only its own outputs,
/// so results do not depend on scheduling. The exception of the lowest failing index is rethrown.
template <class F>
void parallel_for(Index count, int workers, F&& f) {
  if (count <= 0) return;
  const auto n_threads = static_cast<Index>(std::clamp<Index>(workers, 1, count));
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(count));
  auto run = [&](Index i) {
    try {
      f(i);
    } catch (...) {
      errors[static_cast<std::size_t>(i)] = std::current_exception();
    }
  };
  if (n_threads == 1) {
    for (Index i = 0; i < count; ++i) run(i);
  } else {
    std::atomic<Index> next{0};
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(n_threads));
    for (Index w = 0; w < n_threads; ++w) {
      pool.emplace_back([&] {
        for (Index i = next++; i < count; i = next++) run(i);
      });
    }
    for (auto& th : pool) th.join();
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace hmfg
