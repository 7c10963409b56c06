#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "medmat/core/tensor.hpp"

namespace medmat {

/// Row-major H x W grid.
template <typename T>
class Plane {
 public:
  Plane() = default;
  Plane(int height, int width, T fill = T{})
      : height_(height), width_(width), data_(static_cast<std::size_t>(height) * width, fill) {}
  Plane(int height, int width, std::vector<T> values)
      : height_(height), width_(width), data_(std::move(values)) {
    if (data_.size() != static_cast<std::size_t>(height) * width) throw_size_mismatch();
  }

  int height() const { return height_; }
  int width() const { return width_; }
  std::size_t size() const { return data_.size(); }
  bool same_extent(int h, int w) const { return h == height_ && w == width_; }
  template <typename U>
  bool same_extent(const Plane<U>& other) const {
    return other.height() == height_ && other.width() == width_;
  }

  T& operator()(int y, int x) { return data_[static_cast<std::size_t>(y) * width_ + x]; }
  const T& operator()(int y, int x) const { return data_[static_cast<std::size_t>(y) * width_ + x]; }
  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  std::span<T> values() { return data_; }
  std::span<const T> values() const { return data_; }

  bool operator==(const Plane&) const = default;

 private:
  [[noreturn]] static void throw_size_mismatch();

  int height_ = 0;
  int width_ = 0;
  std::vector<T> data_;
};

/// Intensities in [0,1], one or three channels, at least 8x8.
class Image {
 public:
  static constexpr int kMinExtent = 8;

  Image() = default;
  explicit Image(Tensor pixels);

  int channels() const { return pixels_.channels(); }
  int height() const { return pixels_.height(); }
  int width() const { return pixels_.width(); }
  double operator()(int c, int y, int x) const { return pixels_(c, y, x); }
  const Tensor& pixels() const { return pixels_; }

  bool operator==(const Image&) const = default;

 private:
  Tensor pixels_;
};

/// Per-pixel opacity in [0,1].
class AlphaMatte {
 public:
  AlphaMatte() = default;
  explicit AlphaMatte(Plane<double> alpha);
  /// Clips into [0,1] instead of rejecting out-of-range values.
  static AlphaMatte clipped(Plane<double> alpha);
  static AlphaMatte from_tensor(const Tensor& t);

  int height() const { return alpha_.height(); }
  int width() const { return alpha_.width(); }
  std::size_t size() const { return alpha_.size(); }
  double operator()(int y, int x) const { return alpha_(y, x); }
  double operator[](std::size_t i) const { return alpha_[i]; }
  const Plane<double>& plane() const { return alpha_; }
  std::span<const double> values() const { return alpha_.values(); }
  double max() const;
  Tensor to_tensor() const;

  bool operator==(const AlphaMatte&) const = default;

 private:
  Plane<double> alpha_;
};

/// Strictly binary {0,1} mask.
class BinaryMask {
 public:
  BinaryMask() = default;
  BinaryMask(int height, int width) : mask_(height, width, 0) {}
  explicit BinaryMask(Plane<std::uint8_t> mask);

  int height() const { return mask_.height(); }
  int width() const { return mask_.width(); }
  std::size_t size() const { return mask_.size(); }
  std::uint8_t operator()(int y, int x) const { return mask_(y, x); }
  std::uint8_t operator[](std::size_t i) const { return mask_[i]; }
  void set(int y, int x, bool on) { mask_(y, x) = on ? 1 : 0; }
  void set(std::size_t i, bool on) { mask_[i] = on ? 1 : 0; }
  std::span<const std::uint8_t> values() const { return mask_.values(); }
  const Plane<std::uint8_t>& plane() const { return mask_; }
  std::size_t count() const;
  Tensor to_tensor() const;

  bool operator==(const BinaryMask&) const = default;

 private:
  Plane<std::uint8_t> mask_;
};

// Values double as the raster encoding.
enum class TrimapLabel : std::uint8_t { Background = 0, Unknown = 128, Foreground = 255 };

class Trimap {
 public:
  Trimap() = default;
  explicit Trimap(Plane<TrimapLabel> labels);

  int height() const { return labels_.height(); }
  int width() const { return labels_.width(); }
  std::size_t size() const { return labels_.size(); }
  TrimapLabel operator()(int y, int x) const { return labels_(y, x); }
  TrimapLabel operator[](std::size_t i) const { return labels_[i]; }
  const Plane<TrimapLabel>& plane() const { return labels_; }
  std::size_t count(TrimapLabel label) const;
  BinaryMask region(TrimapLabel label) const;

  bool operator==(const Trimap&) const = default;

 private:
  Plane<TrimapLabel> labels_;
};

/// Nonnegative per-pixel entropies in nats.
class UncertaintyField {
 public:
  UncertaintyField() = default;
  explicit UncertaintyField(Plane<double> values);

  int height() const { return values_.height(); }
  int width() const { return values_.width(); }
  std::size_t size() const { return values_.size(); }
  double operator()(int y, int x) const { return values_(y, x); }
  double operator[](std::size_t i) const { return values_[i]; }
  const Plane<double>& plane() const { return values_; }
  std::span<const double> values() const { return values_.values(); }
  Tensor to_tensor() const;

 private:
  Plane<double> values_;
};

template <typename A, typename B>
void require_same_extent(const A& a, const B& b, const char* what);

}  // namespace medmat

#include "medmat/core/image_inl.hpp"
