#pragma once

#include <cstddef>
#include <functional>

namespace dualpatch {

// Runs fn(i) for i in [0, n) on up to `workers` threads. Callers write
// results into per-index slots. If
// several indices throw, the exception from the lowest index is rethrown.
void parallel_for(std::size_t n, int workers,
                  const std::function<void(std::size_t)>& fn);

int default_workers();

}  // namespace dualpatch
