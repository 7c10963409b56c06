#pragma once

namespace medmat {

/// Keeps freed tensor buffers inside the process. Without this glibc maps
/// and unmaps every large activation, which costs more than the arithmetic
/// at training sizes. Call once from main.
void tune_allocator();

}  // namespace medmat
