#pragma once

#include <cstdint>
#include <functional>

namespace phyc {

// Worker cap: min(hardware threads, PHYC_THREADS when set). Always >= 1.
int worker_count();

// Runs fn(i) for i in [0, n). Work items must be independent; results must be
// written to per-index slots so the outcome does not depend on worker count.
void parallel_for(int64_t n, const std::function<void(int64_t)>& fn);

} // namespace phyc
