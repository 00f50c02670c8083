#pragma once

#include <algorithm>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace cslc {

int default_thread_count();
void set_default_thread_count(int n);

// Chunked parallel loop over [0, n). fn(block, begin, end) runs on contiguous
// blocks; block boundaries only depend on (n, threads) so reductions that
// merge per-block partials in block order are deterministic. The first
// exception thrown by a worker is rethrown on the caller's thread.
inline void parallel_for_blocks(size_t n, const std::function<void(size_t, size_t, size_t)>& fn, int threads = 0) {
    if (threads <= 0) threads = default_thread_count();
    size_t nblocks = std::min<size_t>(n, static_cast<size_t>(threads));
    if (nblocks <= 1) {
        if (n > 0) fn(0, 0, n);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(nblocks);
    std::exception_ptr err;
    std::mutex err_mutex;
    size_t chunk = (n + nblocks - 1) / nblocks;
    for (size_t b = 0; b < nblocks; ++b) {
        size_t lo = b * chunk;
        size_t hi = std::min(n, lo + chunk);
        if (lo >= hi) break;
        pool.emplace_back([&fn, &err, &err_mutex, b, lo, hi] {
            try {
                fn(b, lo, hi);
            } catch (...) {
                std::lock_guard<std::mutex> lock(err_mutex);
                if (!err) err = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    if (err) std::rethrow_exception(err);
}

inline void parallel_for(size_t n, const std::function<void(size_t)>& fn, int threads = 0) {
    parallel_for_blocks(
        n, [&fn](size_t, size_t lo, size_t hi) { for (size_t i = lo; i < hi; ++i) fn(i); }, threads);
}

} // namespace cslc
