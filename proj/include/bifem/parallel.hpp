#pragma once

#include <cstddef>
#include <functional>

namespace bifem {

/// Worker count for data-parallel loops. 0 restores the default, which is
/// the BIFEM_THREADS environment variable if set, else the hardware count.
void set_thread_count(int n);
int thread_count();

/// Calls fn(i) for i in [0, n) on up to thread_count() threads. Callers
/// write into per-index slots and reduce afterwards so results do not
/// depend on scheduling.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace bifem
