#pragma once

#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace curveplan {

inline int effective_parallelism(int requested) {
    if (requested > 0) return requested;
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
}

// Runs fn(i) for i in [0, n). Work items are claimed from a shared counter,
// so any item may run on any thread; callers must make fn(i) depend only on
// i (independent derived seeds), which keeps results identical at every
// parallelism degree. The first exception is rethrown on the calling thread.
template <typename Fn>
void parallel_for(size_t n, int parallelism, Fn&& fn) {
    const int degree = effective_parallelism(parallelism);
    if (degree <= 1 || n <= 1) {
        for (size_t i = 0; i < n; ++i) fn(i);
        return;
    }

    std::atomic<size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;

    auto worker = [&] {
        for (;;) {
            const size_t i = next.fetch_add(1);
            if (i >= n) return;
            try {
                fn(i);
            } catch (...) {
                std::lock_guard lock(error_mutex);
                if (!error) error = std::current_exception();
                next.store(n);  // drain remaining work
                return;
            }
        }
    };

    std::vector<std::thread> threads;
    const size_t n_threads = std::min<size_t>(static_cast<size_t>(degree), n);
    threads.reserve(n_threads);
    for (size_t t = 0; t < n_threads; ++t) threads.emplace_back(worker);
    for (auto& t : threads) t.join();
    if (error) std::rethrow_exception(error);
}

}  // namespace curveplan
