#include "medmat/core/runtime.hpp"

#include <malloc.h>

namespace medmat {

void tune_allocator() {
  mallopt(M_MMAP_THRESHOLD, 256 << 20);
  mallopt(M_TRIM_THRESHOLD, 512 << 20);
}

}  // namespace medmat
