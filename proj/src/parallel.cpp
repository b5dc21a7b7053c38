#include "moblur/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <thread>
#include <vector>

namespace moblur {

namespace {
int g_threads = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
}

void set_thread_count(int n) {
    g_threads = n > 0 ? n : static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
}
int thread_count() { return g_threads; }

void parallel_for_chunked(std::size_t n, std::size_t grain,
                          const std::function<void(std::size_t, std::size_t)>& fn) {
    if (n == 0) return;
    grain = std::max<std::size_t>(1, grain);
    const std::size_t nchunks = (n + grain - 1) / grain;
    const int workers = static_cast<int>(std::min<std::size_t>(g_threads, nchunks));
    if (workers <= 1) {
        for (std::size_t c = 0; c < nchunks; ++c)
            fn(c * grain, std::min(n, (c + 1) * grain));
        return;
    }
    std::atomic<std::size_t> next{0};
    auto work = [&]() {
        for (;;) {
            const std::size_t c = next.fetch_add(1);
            if (c >= nchunks) break;
            fn(c * grain, std::min(n, (c + 1) * grain));
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(workers - 1);
    for (int t = 1; t < workers; ++t) pool.emplace_back(work);
    work();
    for (auto& t : pool) t.join();
}

void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& fn) {
    // Grain chosen from n alone so the partition is reproducible.
    const std::size_t grain = std::max<std::size_t>(1, n / 32);
    parallel_for_chunked(n, grain, fn);
}

}  // namespace moblur
