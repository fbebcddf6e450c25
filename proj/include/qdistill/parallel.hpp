#ifndef QDISTILL_PARALLEL_HPP
#define QDISTILL_PARALLEL_HPP

#include <cstdlib>
#include <functional>
#include <thread>
#include <vector>

namespace qdistill {

inline int worker_count(std::size_t n) {
    unsigned hw = std::thread::hardware_concurrency();
    if (const char* env = std::getenv("QDISTILL_THREADS")) {
        const long v = std::strtol(env, nullptr, 10);
        if (v >= 1) hw = static_cast<unsigned>(v);
    }
    if (hw < 1) hw = 1;
    if (static_cast<std::size_t>(hw) > n) hw = static_cast<unsigned>(n);
    return static_cast<int>(hw);
}

// Runs fn(worker, i) for i in [0, n); worker indices are stable for a given
// (n, thread budget), and each worker visits its indices in increasing
// order, so per-worker accumulation plus a worker-ordered reduce stays
// deterministic.
inline void parallel_for_workers(
    std::size_t n, int workers,
    const std::function<void(std::size_t, std::size_t)>& fn) {
    if (n == 0) return;
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(0, i);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&fn, n, w, workers] {
            for (std::size_t i = static_cast<std::size_t>(w); i < n;
                 i += static_cast<std::size_t>(workers))
                fn(static_cast<std::size_t>(w), i);
        });
    }
    for (auto& t : pool) t.join();
}

// Runs fn(i) for i in [0, n) on a small thread pool. Callers own any
// reduction; writes must go to per-index slots for determinism.
inline void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
    parallel_for_workers(n, worker_count(n),
                         [&fn](std::size_t, std::size_t i) { fn(i); });
}

} // namespace qdistill

#endif
