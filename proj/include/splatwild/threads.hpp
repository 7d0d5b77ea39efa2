#pragma once

#include <algorithm>
#include <cstdlib>
#include <functional>
#include <thread>
#include <vector>

namespace splatwild {

// Worker cap: SPLATWILD_THREADS if set (clamped to >= 1), else hardware concurrency.
inline int thread_budget() {
    static const int budget = [] {
        if (const char* env = std::getenv("SPLATWILD_THREADS")) {
            int n = std::atoi(env);
            if (n >= 1) return n;
        }
        unsigned hw = std::thread::hardware_concurrency();
        return hw ? static_cast<int>(hw) : 1;
    }();
    return budget;
}

// Runs fn(begin, end) over disjoint chunks of [0, count). Callers get determinism
// for free as long as chunks only write to their own rows.
inline void parallel_chunks(int count, const std::function<void(int, int)>& fn) {
    int workers = std::min(thread_budget(), std::max(count, 1));
    if (count <= 0) return;
    if (workers <= 1) {
        fn(0, count);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(workers);
    int chunk = (count + workers - 1) / workers;
    for (int w = 0; w < workers; ++w) {
        int lo = w * chunk;
        int hi = std::min(count, lo + chunk);
        if (lo >= hi) break;
        pool.emplace_back(fn, lo, hi);
    }
    for (auto& t : pool) t.join();
}

}  // namespace splatwild
