#pragma once

#include <cstdlib>
#include <exception>
#include <functional>
#include <thread>
#include <vector>

namespace warpfield {

// WARPFIELD_THREADS caps the worker count; 0 (or negative) forces the
// single-worker deterministic mode. Unset falls back to the hardware count.
inline int worker_count() {
    if (const char* env = std::getenv("WARPFIELD_THREADS")) {
        int v = std::atoi(env);
        return v >= 1 ? v : 1;
    }
    unsigned hc = std::thread::hardware_concurrency();
    return hc ? int(hc) : 1;
}

// Splits [0, n) into contiguous chunks, one per worker. Workers must write to
// disjoint output slots keyed by index so parallel and serial runs produce
// identical bytes.
inline void parallel_for(int n, const std::function<void(int, int)>& chunk_fn) {
    if (n <= 0) return;
    int workers = std::min(worker_count(), n);
    if (workers <= 1) {
        chunk_fn(0, n);
        return;
    }
    int chunk = (n + workers - 1) / workers;
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) {
        int begin = w * chunk, end = std::min(n, begin + chunk);
        if (begin >= end) break;
        pool.emplace_back([&, w, begin, end]() {
            try {
                chunk_fn(begin, end);
            } catch (...) {
                errors[std::size_t(w)] = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

} // namespace warpfield
