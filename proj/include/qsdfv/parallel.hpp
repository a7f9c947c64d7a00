#pragma once

#include <cstddef>
#include <functional>

namespace qsdfv {

// Worker count: hardware concurrency, capped by QSDFV_THREADS when set.
std::size_t worker_count();

// Runs body(k) for k in [0, n) on worker_count() threads. Callers write
// results into slot k, so any reduction afterwards is in index order.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace qsdfv
