#pragma once

#include <algorithm>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace moc2d {

/// Resolve a thread-count request: 0 means "use the hardware", anything
/// else is taken as-is (at least 1).
inline int resolve_threads(int requested) {
    if (requested > 0) return requested;
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
}

/// Run fn(i) for i in [begin, end) on up to `threads` workers.
///
/// Results must be written to disjoint slots; the function itself carries no
/// synchronization beyond the final join. If any call throws, the exception
/// thrown for the smallest index is rethrown so failures are reproducible
/// independent of scheduling.
inline void parallel_for(long begin, long end, int threads,
                         const std::function<void(long)>& fn) {
    const long n = end - begin;
    if (n <= 0) return;
    const int workers =
        static_cast<int>(std::max<long>(1, std::min<long>(resolve_threads(threads), n)));
    if (workers == 1) {
        for (long i = begin; i < end; ++i) fn(i);
        return;
    }

    std::mutex err_mutex;
    std::exception_ptr first_error;
    long first_error_index = end;

    const long chunk = (n + workers - 1) / workers;
    std::vector<std::thread> pool;
    pool.reserve(static_cast<size_t>(workers));
    for (int w = 0; w < workers; ++w) {
        const long lo = begin + w * chunk;
        const long hi = std::min(end, lo + chunk);
        if (lo >= hi) break;
        pool.emplace_back([&, lo, hi]() {
            for (long i = lo; i < hi; ++i) {
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(err_mutex);
                    if (i < first_error_index) {
                        first_error_index = i;
                        first_error = std::current_exception();
                    }
                    return;
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
}

}  // namespace moc2d
