#pragma once

#include <cstddef>
#include <functional>
#include <thread>
#include <vector>

namespace attnrel {

// Runs fn(i) for i in [0, n) across up to `workers` threads. Callers collect
// per-index results and reduce them in index order, so outcomes do not depend
// on the worker count.
inline void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn) {
    if (workers <= 1 || n < 2) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    const std::size_t threads = std::min<std::size_t>(static_cast<std::size_t>(workers), n);
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (std::size_t w = 0; w < threads; ++w) {
        pool.emplace_back([&, w] {
            for (std::size_t i = w; i < n; i += threads) fn(i);
        });
    }
    for (std::thread& t : pool) t.join();
}

} // namespace attnrel
