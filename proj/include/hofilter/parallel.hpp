#pragma once

// Deterministic work distribution: body(worker_id, i) runs once for every i,
// in chunks grabbed off an atomic counter. Results must be written to
// per-index slots; reductions happen afterwards in index order, so output is
// independent of the worker count.

#include <atomic>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace hofilter {

inline void parallel_for(std::size_t n, int threads,
                         const std::function<void(int, std::size_t)>& body) {
    if (threads <= 1 || n < 2) {
        for (std::size_t i = 0; i < n; ++i) body(0, i);
        return;
    }
    const std::size_t chunk = 16;
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mu;

    auto work = [&](int worker) {
        try {
            while (true) {
                const std::size_t lo = next.fetch_add(chunk);
                if (lo >= n) break;
                const std::size_t hi = std::min(n, lo + chunk);
                for (std::size_t i = lo; i < hi; ++i) body(worker, i);
            }
        } catch (...) {
            std::lock_guard<std::mutex> g(error_mu);
            if (!error) error = std::current_exception();
        }
    };

    std::vector<std::thread> pool;
    for (int w = 1; w < threads; ++w) pool.emplace_back(work, w);
    work(0);
    for (auto& th : pool) th.join();
    if (error) std::rethrow_exception(error);
}

} // namespace hofilter
