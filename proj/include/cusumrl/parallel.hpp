#pragma once

#include <functional>

namespace cusumrl {

/// Runs fn(0..n-1) on up to `workers` threads. Each index writes only its own
/// output slot, so results never depend on the worker count. The first
/// exception (lowest index) is rethrown after all workers finish.
void parallel_for(int n, int workers, const std::function<void(int)>& fn);

}  // namespace cusumrl
