#pragma once

#include <filesystem>

#include "medmat/core/image.hpp"

namespace medmat::io {

// 8-bit PNG rasters. Images are value/255; masks are 0/255; trimaps use
// the TrimapLabel byte values. Colour images are stored RGB in memory.

Image load_image(const std::filesystem::path& path);
void save_image(const std::filesystem::path& path, const Image& image);

/// Quantized to round(255 * alpha); the round trip loses at most 1/510.
AlphaMatte load_alpha(const std::filesystem::path& path);
void save_alpha(const std::filesystem::path& path, const AlphaMatte& alpha);

/// Pixels >= 128 read as 1.
BinaryMask load_mask(const std::filesystem::path& path);
void save_mask(const std::filesystem::path& path, const BinaryMask& mask);

Trimap load_trimap(const std::filesystem::path& path);
void save_trimap(const std::filesystem::path& path, const Trimap& trimap);

/// Writes values / max_value rescaled to 0-255.
void save_scaled(const std::filesystem::path& path, const UncertaintyField& field, double max_value);

}  // namespace medmat::io
