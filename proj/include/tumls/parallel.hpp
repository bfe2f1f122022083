#pragma once

#include <cstddef>
#include <functional>

namespace tumls {

/// Worker cap for intra-stage parallel maps. 0 means hardware concurrency.
void set_thread_count(unsigned n);
unsigned thread_count();

/// Runs fn(i) for i in [0, n). Each index is visited exactly once; callers
/// write results into pre-sized slots so output order never depends on
/// scheduling.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace tumls
