#pragma once

#include <functional>

namespace relcap {

// Runs fn(0..n-1) on up to `threads` workers (static interleaved split).
// The first exception thrown by any call is rethrown after all workers join.
void parallel_for(int n, int threads, const std::function<void(int)>& fn);

}  // namespace relcap
