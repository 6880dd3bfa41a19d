#pragma once

#include <cstddef>
#include <functional>

namespace xmodal {

/// Worker cap used by parallel_for. Defaults to XMODAL_THREADS if set, else 1.
int thread_count();
void set_thread_count(int n);

/// Runs fn(i) for i in [0, n). Work is split into contiguous chunks; callers must write
/// results into per-index slots so the outcome does not depend on scheduling.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace xmodal
