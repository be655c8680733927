#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>

namespace spqrx {

// Thread count: a positive request wins, then the SPQRX_THREADS environment
// variable, then the hardware concurrency (at least 1).
int resolve_threads(int requested = 0);

// Runs fn(i) for i in [0, n) on up to `threads` worker threads with static
// interleaved scheduling. The first exception thrown by any call is
// rethrown after all workers finish.
void parallel_for(std::size_t n, int threads,
                  const std::function<void(std::size_t)>& fn);

// 64-bit FNV-1a hash, used to fingerprint configurations.
std::uint64_t fnv1a(const std::string& text);

}  // namespace spqrx
