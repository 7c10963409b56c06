#pragma once

#include <fmt/format.h>

#include "medmat/core/error.hpp"

namespace medmat {

template <typename T>
void Plane<T>::throw_size_mismatch() {
  throw ShapeError("plane value count does not match its extent");
}

template <typename A, typename B>
void require_same_extent(const A& a, const B& b, const char* what) {
  if (a.height() != b.height() || a.width() != b.width()) {
    throw ShapeError(fmt::format("{}: extent mismatch {}x{} vs {}x{}", what, a.height(), a.width(),
                                 b.height(), b.width()));
  }
}

}  // namespace medmat
