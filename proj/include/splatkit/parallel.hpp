#pragma once

#include <algorithm>
#include <cstdlib>
#include <string>
#include <thread>
#include <vector>

namespace splatkit {

// Default worker count: SPLATKIT_THREADS if set, otherwise the hardware
// concurrency. Callers pass threads == 1 for the deterministic sequential
// mode used by tests.
inline int default_thread_count() {
    if (const char* env = std::getenv("SPLATKIT_THREADS")) {
        const int n = std::atoi(env);
        if (n >= 1) return n;
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw > 0 ? static_cast<int>(hw) : 1;
}

// Runs body(y0, y1) over disjoint row ranges covering [0, rows).
template <class Body>
inline void parallel_rows(int rows, int threads, Body&& body) {
    threads = std::max(1, std::min(threads, rows));
    if (threads == 1) {
        body(0, rows);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(threads - 1);
    const int chunk = (rows + threads - 1) / threads;
    for (int t = 1; t < threads; ++t) {
        const int y0 = t * chunk;
        const int y1 = std::min(rows, y0 + chunk);
        if (y0 >= y1) break;
        pool.emplace_back([&body, y0, y1] { body(y0, y1); });
    }
    body(0, std::min(rows, chunk));
    for (auto& th : pool) th.join();
}

}  // namespace splatkit
