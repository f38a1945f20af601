#pragma once

#include <cstddef>
#include <functional>

namespace nova {

/// Worker count: NOVA_THREADS when set (minimum 1), else hardware concurrency.
std::size_t worker_count();

/// Runs body(i) for i in [0, n). Iterations must be independent; results are
/// identical for any worker count.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace nova
