#pragma once

// Fixed-size worker pool over an index range. Results are written by index so
// output order never depends on completion order.

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace invdp {

/// Runs fn(i) for i in [0, n) on up to `workers` threads. The exception from
/// the lowest failing index is rethrown after all threads join.
template <typename Fn>
void parallel_for(std::size_t n, int workers, Fn&& fn) {
    if (n == 0) return;
    const std::size_t w = std::max<std::size_t>(1, std::min<std::size_t>(n, workers > 0 ? workers : 1));
    std::atomic<std::size_t> next{0};
    std::mutex mu;
    std::size_t failed_at = n;
    std::exception_ptr failure;
    auto run = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= n) return;
            try {
                fn(i);
            } catch (...) {
                std::lock_guard lock(mu);
                if (i < failed_at) {
                    failed_at = i;
                    failure = std::current_exception();
                }
            }
        }
    };
    if (w == 1) {
        run();
    } else {
        std::vector<std::jthread> pool;
        pool.reserve(w);
        for (std::size_t t = 0; t < w; ++t) pool.emplace_back(run);
    }
    if (failure) std::rethrow_exception(failure);
}

}  // namespace invdp
