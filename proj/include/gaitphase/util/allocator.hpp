#pragma once

// Process-wide allocator tuning for executables. Training allocates and frees
// multi-megabyte activations every step; with glibc's default thresholds each
// one becomes a fresh mmap and pays its page faults again.

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace gaitphase {

inline void tune_allocator() {
#if defined(__GLIBC__)
  mallopt(M_MMAP_THRESHOLD, 512 * 1024 * 1024);
  mallopt(M_TRIM_THRESHOLD, 1024 * 1024 * 1024);
  mallopt(M_TOP_PAD, 64 * 1024 * 1024);
#endif
}

}  // namespace gaitphase
