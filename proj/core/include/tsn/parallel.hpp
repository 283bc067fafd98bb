#pragma once

#include <cstddef>
#include <functional>

namespace tsn {

/// Worker cap: TSN_THREADS when set to a positive integer, otherwise the
/// machine's hardware concurrency (at least 1).
int worker_count();

/// Runs fn(i) for i in [0, n) on up to worker_count() threads. Results must
/// not depend on scheduling; the exception of the lowest failing index is
/// rethrown after all workers finish.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace tsn
