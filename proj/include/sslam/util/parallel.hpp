#pragma once

#include <functional>

namespace sslam {

/// Worker-thread budget: min(hardware threads, SURFELSLAM_THREADS). Read
/// once, cached.
int worker_threads();

/// Runs fn(begin, end) over a static partition of [0, n). Chunks are
/// independent; callers must not share mutable state across them. With one
/// worker this degenerates to a direct call.
void parallel_chunks(int n, const std::function<void(int, int)>& fn);

}  // namespace sslam
