#include "medmat/core/image.hpp"

#include <algorithm>
#include <cmath>

namespace medmat {

Image::Image(Tensor pixels) : pixels_(std::move(pixels)) {
  if (pixels_.channels() != 1 && pixels_.channels() != 3) {
    throw ShapeError(fmt::format("image must have 1 or 3 channels, got {}", pixels_.channels()));
  }
  if (pixels_.height() < kMinExtent || pixels_.width() < kMinExtent) {
    throw ShapeError(fmt::format("image extent {}x{} below minimum {}", pixels_.height(),
                                 pixels_.width(), kMinExtent));
  }
  for (double v : pixels_.values()) {
    if (!(v >= 0.0 && v <= 1.0)) throw DomainError(fmt::format("image intensity {} outside [0,1]", v));
  }
}

AlphaMatte::AlphaMatte(Plane<double> alpha) : alpha_(std::move(alpha)) {
  for (double v : alpha_.values()) {
    if (!(v >= 0.0 && v <= 1.0)) throw DomainError(fmt::format("alpha value {} outside [0,1]", v));
  }
}

AlphaMatte AlphaMatte::clipped(Plane<double> alpha) {
  for (double& v : alpha.values()) v = std::isnan(v) ? 0.0 : std::clamp(v, 0.0, 1.0);
  return AlphaMatte(std::move(alpha));
}

AlphaMatte AlphaMatte::from_tensor(const Tensor& t) {
  if (t.channels() != 1) throw ShapeError("alpha tensor must have a single channel");
  return AlphaMatte(Plane<double>(t.height(), t.width(),
                                  std::vector<double>(t.values().begin(), t.values().end())));
}

double AlphaMatte::max() const {
  double m = 0.0;
  for (double v : alpha_.values()) m = std::max(m, v);
  return m;
}

Tensor AlphaMatte::to_tensor() const {
  return Tensor({1, height(), width()}, std::vector<double>(values().begin(), values().end()));
}

BinaryMask::BinaryMask(Plane<std::uint8_t> mask) : mask_(std::move(mask)) {
  for (std::uint8_t v : mask_.values()) {
    if (v > 1) throw DomainError(fmt::format("mask value {} is not binary", int(v)));
  }
}

std::size_t BinaryMask::count() const {
  return static_cast<std::size_t>(std::count(mask_.values().begin(), mask_.values().end(), 1));
}

Tensor BinaryMask::to_tensor() const {
  Tensor t({1, height(), width()});
  for (std::size_t i = 0; i < size(); ++i) t[i] = mask_[i];
  return t;
}

Trimap::Trimap(Plane<TrimapLabel> labels) : labels_(std::move(labels)) {
  for (TrimapLabel v : labels_.values()) {
    if (v != TrimapLabel::Background && v != TrimapLabel::Unknown && v != TrimapLabel::Foreground) {
      throw DomainError(fmt::format("invalid trimap label {}", int(v)));
    }
  }
}

std::size_t Trimap::count(TrimapLabel label) const {
  return static_cast<std::size_t>(std::count(labels_.values().begin(), labels_.values().end(), label));
}

BinaryMask Trimap::region(TrimapLabel label) const {
  BinaryMask m(height(), width());
  for (std::size_t i = 0; i < size(); ++i) m.set(i, labels_[i] == label);
  return m;
}

UncertaintyField::UncertaintyField(Plane<double> values) : values_(std::move(values)) {
  for (double v : values_.values()) {
    if (!(v >= 0.0) || !std::isfinite(v)) {
      throw DomainError(fmt::format("uncertainty value {} is not a finite nonnegative entropy", v));
    }
  }
}

Tensor UncertaintyField::to_tensor() const {
  return Tensor({1, height(), width()}, std::vector<double>(values().begin(), values().end()));
}

}  // namespace medmat
