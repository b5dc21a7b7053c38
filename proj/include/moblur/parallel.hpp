#pragma once

#include <cstddef>
#include <functional>

namespace moblur {

// Global worker count (1 = run everything inline). Results of all parallel
// helpers are independent of this value: work is split into fixed chunks and
// any reduction combines chunk results in chunk order.
void set_thread_count(int n);
int thread_count();

// Invokes fn(begin, end) over disjoint subranges of [0, n).
void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& fn);

// Like parallel_for but with an explicit chunk grain; chunk boundaries depend
// only on n and grain, never on the worker count.
void parallel_for_chunked(std::size_t n, std::size_t grain,
                          const std::function<void(std::size_t, std::size_t)>& fn);

}  // namespace moblur
