#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "medmat/core/image.hpp"

namespace medmat::fusion {

/// Binary masks of one image from distinct annotators.
struct AnnotationSet {
  std::vector<BinaryMask> masks;
  Image image;

  /// Throws ArityError for fewer than two masks and ShapeError when a mask
  /// does not match the image extent.
  void validate() const;
};

/// Threshold range for pseudo masks, as fractions of max(alpha).
struct PseudoMaskSampler {
  double lo_frac = 0.2;
  double hi_frac = 0.7;
  std::uint64_t rng_seed = 0;

  void validate() const;
};

inline constexpr int kDefaultDilationRadius = 2;
inline constexpr int kHistogramBins = 64;

/// Foreground / background where every annotator agrees, unknown elsewhere;
/// the unknown set is then dilated by an L2 disk of `dilation_radius`.
Trimap build_trimap(const AnnotationSet& annotations, int dilation_radius = kDefaultDilationRadius);
Trimap build_trimap(std::span<const BinaryMask> masks, int dilation_radius = kDefaultDilationRadius);

/// All offsets (dy, dx) with dy^2 + dx^2 <= radius^2, as a (2r+1)^2 mask.
BinaryMask disk_element(int radius);

/// 1 where alpha >= tau.
BinaryMask threshold_mask(const AlphaMatte& alpha, double tau);

/// Draws tau uniformly from [lo, hi] * max(alpha) using the sampler seed.
double draw_threshold(const AlphaMatte& alpha, const PseudoMaskSampler& sampler);

/// threshold_mask(alpha, draw_threshold(alpha, sampler)). Throws
/// DegenerateInputError when alpha is identically zero.
BinaryMask sample_pseudo_mask(const AlphaMatte& alpha, const PseudoMaskSampler& sampler);

/// `count` equidistant thresholds spanning [lo, hi] * max(alpha); a single
/// threshold sits at the midpoint.
std::vector<double> equispaced_thresholds(const AlphaMatte& alpha, int count, double lo_frac = 0.2,
                                          double hi_frac = 0.7);
/// Masks in increasing-threshold order, hence nested non-increasing.
std::vector<BinaryMask> equispaced_masks(const AlphaMatte& alpha, int count, double lo_frac = 0.2,
                                         double hi_frac = 0.7);

struct Histogram {
  std::vector<double> bins;  // normalised to sum 1, or all zero when empty
  std::size_t pixel_count = 0;

  bool empty() const { return pixel_count == 0; }
};

struct RegionHistograms {
  Histogram foreground;
  Histogram background;
  Histogram unknown;
};

/// Intensity histograms over [0,1] per trimap region. Colour pixels use the
/// channel mean.
RegionHistograms intensity_distributions(const Image& image, const Trimap& trimap,
                                         int bins = kHistogramBins);

}  // namespace medmat::fusion
