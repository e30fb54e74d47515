#pragma once

#include <cstddef>
#include <functional>

namespace vcgsa {

// Global worker cap for parallel_for. 0 means hardware_concurrency.
void set_max_threads(unsigned n);
unsigned max_threads();

// Runs fn(i) for i in [0, n). Work is split into contiguous chunks, one per
// worker. Deterministic output requires that distinct i write to disjoint
// slots; reductions must be done serially by the caller afterwards.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

} // namespace vcgsa
