// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <thread>
#include <vector>

namespace vdsm {

// Runs fn(i) for i in [0, n) over the given number of worker threads, in
// disjoint contiguous chunks. Callers must make writes disjoint per index, so
// results are identical for any thread count.
template <typename Fn>
void parallel_for(int n, int threads, Fn&& fn) {
    if (threads < 1) throw std::invalid_argument("parallel_for: threads must be >= 1");
    if (n <= 0) return;
    if (threads == 1 || n == 1) {
        for (int i = 0; i < n; ++i) fn(i);
        return;
    }
    const int workers = std::min(threads, n);
    std::vector<std::thread> pool;
    const int chunk = (n + workers - 1) / workers;
    for (int w = 0; w < workers; ++w) {
        const int lo = w * chunk;
        const int hi = std::min(n, lo + chunk);
        if (lo >= hi) break;
        pool.emplace_back([lo, hi, &fn]() {
            for (int i = lo; i < hi; ++i) fn(i);
        });
    }
    for (std::thread& t : pool) t.join();
}

}  // namespace vdsm
