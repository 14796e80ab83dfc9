#pragma once

#include <cstddef>
#include <functional>
#include <thread>
#include <vector>

namespace rankgraph {

// Static chunking over [0, n). Each index is visited exactly once and results
// must be written to per-index slots, so the outcome is identical for any
// thread count. n_threads <= 1 runs inline.
inline void parallel_for(std::size_t n, std::size_t n_threads,
                         const std::function<void(std::size_t)>& fn) {
    if (n == 0) return;
    if (n_threads <= 1 || n == 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::size_t workers = std::min(n_threads, n);
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&, w]() {
            for (std::size_t i = w; i < n; i += workers) fn(i);
        });
    }
    for (auto& t : pool) t.join();
}

}  // namespace rankgraph
