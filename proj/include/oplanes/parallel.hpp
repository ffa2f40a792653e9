#pragma once

#include <cstddef>
#include <functional>

namespace oplanes {

// Worker count: OPLANES_THREADS when set, otherwise hardware concurrency;
// always 1 when OPLANES_DETERMINISTIC=1 or deterministic mode was forced.
std::size_t worker_count();
bool deterministic_mode();
void set_deterministic_mode(bool on);

// Runs body(i) for i in [0, n). Iterations must write to disjoint outputs;
// results are then independent of the thread count.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

// Keeps freed tensor-sized blocks in the heap instead of returning them to
// the OS after every layer (glibc only; no-op elsewhere). Call once at start.
void tune_allocator();

}  // namespace oplanes
