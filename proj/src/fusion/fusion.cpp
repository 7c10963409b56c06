#include "medmat/fusion/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include <fmt/format.h>
#include <opencv2/imgproc.hpp>

#include "medmat/core/error.hpp"

namespace medmat::fusion {

void AnnotationSet::validate() const {
  if (masks.size() < 2) {
    throw ArityError(fmt::format("an annotation set needs at least 2 masks, got {}", masks.size()));
  }
  for (const BinaryMask& m : masks) require_same_extent(m, image, "annotation mask vs image");
}

void PseudoMaskSampler::validate() const {
  if (!(lo_frac >= 0.0 && lo_frac < hi_frac && hi_frac <= 1.0)) {
    throw ConfigError(fmt::format("pseudo-mask range needs 0 <= lo < hi <= 1, got [{}, {}]", lo_frac, hi_frac));
  }
}

BinaryMask disk_element(int radius) {
  if (radius < 0) throw DomainError("dilation radius must be nonnegative");
  const int n = 2 * radius + 1;
  BinaryMask se(n, n);
  for (int dy = -radius; dy <= radius; ++dy) {
    for (int dx = -radius; dx <= radius; ++dx) se.set(dy + radius, dx + radius, dy * dy + dx * dx <= radius * radius);
  }
  return se;
}

Trimap build_trimap(std::span<const BinaryMask> masks, int dilation_radius) {
  if (masks.size() < 2) {
    throw ArityError(fmt::format("trimap needs at least 2 annotator masks, got {}", masks.size()));
  }
  if (dilation_radius < 0) throw DomainError("dilation radius must be nonnegative");
  const BinaryMask& first = masks.front();
  for (const BinaryMask& m : masks) require_same_extent(m, first, "annotator masks");

  const int h = first.height(), w = first.width();
  Plane<TrimapLabel> labels(h, w);
  cv::Mat unknown(h, w, CV_8UC1, cv::Scalar(0));
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      std::size_t ones = 0;
      for (const BinaryMask& m : masks) ones += m(y, x);
      if (ones == masks.size()) {
        labels(y, x) = TrimapLabel::Foreground;
      } else if (ones == 0) {
        labels(y, x) = TrimapLabel::Background;
      } else {
        labels(y, x) = TrimapLabel::Unknown;
        unknown.at<std::uint8_t>(y, x) = 1;
      }
    }
  }

  if (dilation_radius > 0) {
    const BinaryMask se = disk_element(dilation_radius);
    cv::Mat kernel(se.height(), se.width(), CV_8UC1);
    for (int y = 0; y < se.height(); ++y) {
      for (int x = 0; x < se.width(); ++x) kernel.at<std::uint8_t>(y, x) = se(y, x);
    }
    cv::dilate(unknown, unknown, kernel);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        if (unknown.at<std::uint8_t>(y, x)) labels(y, x) = TrimapLabel::Unknown;
      }
    }
  }
  return Trimap(std::move(labels));
}

Trimap build_trimap(const AnnotationSet& annotations, int dilation_radius) {
  annotations.validate();
  return build_trimap(std::span<const BinaryMask>(annotations.masks), dilation_radius);
}

BinaryMask threshold_mask(const AlphaMatte& alpha, double tau) {
  BinaryMask m(alpha.height(), alpha.width());
  for (std::size_t i = 0; i < alpha.size(); ++i) m.set(i, alpha[i] >= tau);
  return m;
}

double draw_threshold(const AlphaMatte& alpha, const PseudoMaskSampler& sampler) {
  sampler.validate();
  const double peak = alpha.max();
  if (!(peak > 0.0)) throw DegenerateInputError("pseudo-mask threshold range collapses on an all-zero matte");
  std::mt19937_64 rng(sampler.rng_seed);
  std::uniform_real_distribution<double> dist(sampler.lo_frac * peak, sampler.hi_frac * peak);
  return dist(rng);
}

BinaryMask sample_pseudo_mask(const AlphaMatte& alpha, const PseudoMaskSampler& sampler) {
  return threshold_mask(alpha, draw_threshold(alpha, sampler));
}

std::vector<double> equispaced_thresholds(const AlphaMatte& alpha, int count, double lo_frac, double hi_frac) {
  if (count < 1) throw ArityError(fmt::format("equispaced_masks needs count >= 1, got {}", count));
  PseudoMaskSampler{lo_frac, hi_frac, 0}.validate();
  const double peak = alpha.max();
  if (!(peak > 0.0)) throw DegenerateInputError("equispaced thresholds on an all-zero matte");
  std::vector<double> taus(static_cast<std::size_t>(count));
  for (int k = 0; k < count; ++k) {
    const double frac = count == 1 ? 0.5 * (lo_frac + hi_frac)
                                   : lo_frac + (hi_frac - lo_frac) * static_cast<double>(k) / (count - 1);
    taus[static_cast<std::size_t>(k)] = frac * peak;
  }
  return taus;
}

std::vector<BinaryMask> equispaced_masks(const AlphaMatte& alpha, int count, double lo_frac, double hi_frac) {
  std::vector<BinaryMask> masks;
  for (double tau : equispaced_thresholds(alpha, count, lo_frac, hi_frac)) {
    masks.push_back(threshold_mask(alpha, tau));
  }
  return masks;
}

RegionHistograms intensity_distributions(const Image& image, const Trimap& trimap, int bins) {
  require_same_extent(image, trimap, "image vs trimap");
  if (bins < 1) throw DomainError("histogram needs at least one bin");
  RegionHistograms out;
  for (Histogram* h : {&out.foreground, &out.background, &out.unknown}) h->bins.assign(bins, 0.0);

  for (int y = 0; y < image.height(); ++y) {
    for (int x = 0; x < image.width(); ++x) {
      double v = 0.0;
      for (int c = 0; c < image.channels(); ++c) v += image(c, y, x);
      v /= image.channels();
      const int bin = std::min(bins - 1, static_cast<int>(std::floor(v * bins)));
      Histogram& h = trimap(y, x) == TrimapLabel::Foreground   ? out.foreground
                     : trimap(y, x) == TrimapLabel::Background ? out.background
                                                               : out.unknown;
      h.bins[static_cast<std::size_t>(bin)] += 1.0;
      ++h.pixel_count;
    }
  }
  for (Histogram* h : {&out.foreground, &out.background, &out.unknown}) {
    if (h->empty()) continue;
    for (double& b : h->bins) b /= static_cast<double>(h->pixel_count);
  }
  return out;
}

}  // namespace medmat::fusion
