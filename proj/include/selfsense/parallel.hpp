#pragma once

#include <cstdint>
#include <functional>

namespace selfsense {

// Worker count for parallel sections. Defaults to hardware concurrency,
// override with set_worker_count or the SELFSENSE_THREADS env var.
int worker_count();
void set_worker_count(int n);

// Runs fn(chunk_index, begin, end) over [0, n) split into ceil(n / chunk_size)
// contiguous chunks. Chunk boundaries depend only on n and chunk_size, never
// on the worker count, so any computation whose chunks write disjoint outputs
// (or whose per-chunk partials are reduced in chunk order afterwards) is
// bit-identical for 1 or N workers.
void parallel_chunks(int64_t n, int64_t chunk_size,
                     const std::function<void(int64_t, int64_t, int64_t)>& fn);

// Convenience: fn(i) for i in [0, n), disjoint-write workloads.
void parallel_for(int64_t n, const std::function<void(int64_t)>& fn);

}  // namespace selfsense
