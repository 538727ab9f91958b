#pragma once

#include <cstddef>
#include <functional>

namespace logrecon {

// Worker count from LOGRECON_THREADS, defaulting to hardware concurrency.
int worker_count();

// Splits [0, n) into at most worker_count() contiguous chunks and runs
// fn(begin, end, chunk_index) on each. Chunk boundaries depend only on n and
// the worker count, so callers can reduce per-chunk results in a fixed order.
void parallel_chunks(std::size_t n, const std::function<void(std::size_t, std::size_t, std::size_t)>& fn);

// Number of chunks parallel_chunks(n, ...) will produce.
std::size_t chunk_count(std::size_t n);

}  // namespace logrecon
