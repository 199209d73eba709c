#pragma once

#include <cstddef>

namespace survbias {

/// Selects between the serial reference kernels and the OpenMP kernels.
/// Both produce results independent of the thread count; the parallel
/// kernels use fixed-size chunks so their reduction order never changes.
enum class Execution { Serial, Parallel };

namespace kernels {

inline constexpr std::size_t kChunkRows = 8192;

/// Number of OpenMP worker threads the parallel kernels will use.
int worker_count();

/// Overrides the OpenMP thread count (0 restores the runtime default).
void set_worker_count(int workers);

}  // namespace kernels
}  // namespace survbias
