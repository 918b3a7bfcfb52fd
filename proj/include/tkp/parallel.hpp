#pragma once

#include <cstddef>
#include <functional>

namespace tkp {

/// Worker cap: hardware concurrency, lowered by the TKP_THREADS env var.
std::size_t worker_count();

/// Runs fn(begin, end) over a static contiguous partition of [0, n). Each
/// index is owned by exactly one worker, so results do not depend on the
/// thread count.
void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& fn,
                  std::size_t min_chunk = 1);

}  // namespace tkp
