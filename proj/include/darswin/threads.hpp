#pragma once

#include <algorithm>
#include <cstdlib>
#include <functional>
#include <thread>
#include <vector>

namespace darswin {

/// Worker count resolution: explicit request > DARSWIN_THREADS > hardware.
inline int resolve_threads(int requested = 0) {
    if (requested > 0) return requested;
    if (const char* env = std::getenv("DARSWIN_THREADS")) {
        const int n = std::atoi(env);
        if (n > 0) return n;
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw > 0 ? static_cast<int>(hw) : 1;
}

/// Static block partition of [0, count). Each index is processed exactly once
/// and results must be written to disjoint slots, so the outcome does not
/// depend on scheduling.
inline void parallel_for(std::size_t count, int threads,
                         const std::function<void(std::size_t, std::size_t)>& body) {
    const int nt = std::clamp<int>(resolve_threads(threads), 1,
                                   count == 0 ? 1 : static_cast<int>(std::min<std::size_t>(count, 256)));
    if (nt <= 1 || count < 2) {
        body(0, count);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(nt);
    const std::size_t chunk = (count + nt - 1) / nt;
    for (int t = 0; t < nt; ++t) {
        const std::size_t lo = std::min(count, t * chunk);
        const std::size_t hi = std::min(count, lo + chunk);
        if (lo >= hi) break;
        pool.emplace_back([&body, lo, hi] { body(lo, hi); });
    }
    for (auto& th : pool) th.join();
}

}  // namespace darswin
