#pragma once

#include <cstddef>

// Deterministic parallel Monte Carlo layout. Paths are grouped into fixed-size
// blocks; each block accumulates serially in path order, block partials land in
// slots indexed by block id, and slots are merged by a fixed-shape pairwise tree.
// The result is bit-identical for any thread count (IRLQ_THREADS=1 included),
// which is what lets a serial reference run vouch for the parallel kernels.

namespace irlq {

inline constexpr std::size_t kPathBlock = 256;

// min(IRLQ_THREADS if set, OpenMP's available threads); at least 1.
int worker_count();

inline std::size_t block_count(std::size_t paths) {
    return (paths + kPathBlock - 1) / kPathBlock;
}

}  // namespace irlq
