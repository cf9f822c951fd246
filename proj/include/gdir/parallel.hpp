#pragma once

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <functional>
#include <thread>
#include <vector>

namespace gdir {

// Thread cap: GDIR_THREADS if set, else hardware concurrency.
inline int max_threads() {
    if (const char* env = std::getenv("GDIR_THREADS")) {
        const int v = std::atoi(env);
        if (v >= 1) return v;
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw ? static_cast<int>(hw) : 1;
}

// Runs fn(chunk_index, begin, end) over fixed-size chunks of [0, count).
// Chunk boundaries do not depend on the thread count, so per-chunk results
// reduced in chunk order are reproducible for any GDIR_THREADS value.
inline void parallel_chunks(std::size_t count, std::size_t chunk_size,
                            const std::function<void(std::size_t, std::size_t, std::size_t)>& fn) {
    if (count == 0) return;
    const std::size_t n_chunks = (count + chunk_size - 1) / chunk_size;
    const int threads = std::min<int>(max_threads(), static_cast<int>(n_chunks));
    if (threads <= 1) {
        for (std::size_t c = 0; c < n_chunks; ++c)
            fn(c, c * chunk_size, std::min(count, (c + 1) * chunk_size));
        return;
    }
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (;;) {
            const std::size_t c = next.fetch_add(1);
            if (c >= n_chunks) break;
            fn(c, c * chunk_size, std::min(count, (c + 1) * chunk_size));
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(threads - 1);
    for (int t = 1; t < threads; ++t) pool.emplace_back(worker);
    worker();
    for (auto& th : pool) th.join();
}

} // namespace gdir
